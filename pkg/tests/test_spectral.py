import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings

from conftest import random_digraph_strategy
from netpassivity.graph_core import Digraph, build_incidence, globally_reachable_nodes, is_balanced
from netpassivity.spectral import (
    analyze_sym_Lo,
    check_proposition1,
    check_proposition2_3,
    fan_hoffman_gap,
    kernel_basis,
    proposition_corpus,
    run_proposition_suite,
)

digraphs = random_digraph_strategy()


def sym_lo_by_adjacency(g):
    # D_out - (A + A^T)/2 built straight from the edge list
    n = g.n_vertices
    A = np.zeros((n, n))
    for s, t in g.edges:
        A[s - 1, t - 1] = 1.0
    return np.diag(A.sum(axis=1)) - 0.5 * (A + A.T)


def test_path_graph_min_eigenvalue(path_graph):
    an = analyze_sym_Lo(build_incidence(path_graph))
    assert abs(an.min_eigenvalue - (1 - math.sqrt(2)) / 2) <= 1e-12
    assert abs(an.eigenvalues[1] - (1 + math.sqrt(2)) / 2) <= 1e-12
    assert not an.feedback_passive


def test_three_cycle_spectrum(cycle3):
    an = analyze_sym_Lo(build_incidence(cycle3))
    np.testing.assert_allclose(an.eigenvalues, [0.0, 1.5, 1.5], atol=1e-12)
    assert an.feedback_passive and an.has_zero_eigenvalue and an.kernels_equal


def test_case_graph_spectrum(case_graph):
    an = analyze_sym_Lo(build_incidence(case_graph))
    oracle = scipy.linalg.eigh(sym_lo_by_adjacency(case_graph), eigvals_only=True)
    np.testing.assert_allclose(an.eigenvalues, oracle, atol=1e-12)
    assert abs(an.min_eigenvalue) <= an.tol_eig
    assert an.kernels_equal
    assert an.kernel_Lo.shape[1] == 1
    v = an.kernel_Lo[:, 0]
    np.testing.assert_allclose(np.abs(v), np.full(5, 1 / math.sqrt(5)), atol=1e-12)


def test_min_eigenvector_sign_is_fixed(path_graph):
    vec = analyze_sym_Lo(build_incidence(path_graph)).min_eigenvector
    assert vec[np.argmax(np.abs(vec))] > 0
    assert abs(np.linalg.norm(vec) - 1) < 1e-12


def test_explicit_tolerance_validation(cycle3):
    inc = build_incidence(cycle3)
    with pytest.raises(ValueError):
        analyze_sym_Lo(inc, tol_eig=0.0)
    assert analyze_sym_Lo(inc, tol_eig=1e-6).tol_eig == 1e-6


def test_path_props_consistent_all_false(path_graph):
    res = check_proposition2_3(path_graph)
    assert res["applicable"]
    assert (res["kernels_equal"], res["zero_eigenvalue"], res["balanced"]) == (False, False, False)
    assert res["consistent"]
    p1 = check_proposition1(path_graph)
    assert p1["applicable"] and p1["holds"]


def test_isolated_vertices_not_applicable():
    g = Digraph(3, ((1, 2),))
    assert not globally_reachable_nodes(g)
    assert check_proposition1(g)["applicable"] is False
    assert check_proposition2_3(g)["applicable"] is False


def test_kernel_basis_of_zero_and_identity():
    assert kernel_basis(np.zeros((3, 3))).shape == (3, 3)
    assert kernel_basis(np.eye(3)).shape == (3, 0)


@settings(max_examples=150, deadline=None)
@given(digraphs(n_min=2, n_max=8))
def test_spectrum_matches_scipy(g):
    an = analyze_sym_Lo(build_incidence(g))
    oracle = scipy.linalg.eigh(sym_lo_by_adjacency(g), eigvals_only=True)
    np.testing.assert_allclose(an.eigenvalues, oracle, atol=1e-10)
    np.testing.assert_allclose(an.sym_Lo, an.sym_Lo.T, atol=0)


@settings(max_examples=150, deadline=None)
@given(digraphs(n_min=2, n_max=8))
def test_kernel_dimension_matches_scipy_null_space(g):
    L_o = build_incidence(g).L_o.astype(float)
    an = analyze_sym_Lo(build_incidence(g))
    assert an.kernel_Lo.shape[1] == scipy.linalg.null_space(L_o, rcond=1e-10).shape[1]
    assert an.kernel_LoT.shape[1] == scipy.linalg.null_space(L_o.T, rcond=1e-10).shape[1]


@settings(max_examples=200, deadline=None)
@given(digraphs(n_min=2, n_max=8))
def test_fan_hoffman_bound(g):
    assert fan_hoffman_gap(build_incidence(g)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(digraphs(n_min=2, n_max=8))
def test_balanced_graphs_have_ones_in_kernel(g):
    inc = build_incidence(g)
    if not is_balanced(inc):
        return
    an = analyze_sym_Lo(inc)
    assert np.linalg.norm(an.sym_Lo @ np.ones(g.n_vertices)) <= 1e-12 * g.n_vertices
    assert an.min_eigenvalue >= -an.tol_eig


@settings(max_examples=200, deadline=None)
@given(digraphs(n_min=2, n_max=8))
def test_propositions_on_random_graphs(g):
    p1 = check_proposition1(g)
    p23 = check_proposition2_3(g)
    if p1["applicable"]:
        assert p1["holds"]
        assert p23["consistent"]


def test_symmetric_closure_is_balanced_and_psd():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < 0.5]
        g = Digraph(n, tuple(pairs + [(j, i) for i, j in pairs]))
        an = analyze_sym_Lo(build_incidence(g))
        assert an.min_eigenvalue >= -an.tol_eig


def test_corpus_respects_bounds_and_reachability():
    corpus = proposition_corpus(3, 60, n_max=6)
    assert len(corpus) == 60
    for g in corpus:
        assert 2 <= g.n_vertices <= 6
        assert globally_reachable_nodes(g)


@pytest.mark.parametrize("count, n_max", [(0, 8), (-3, 8), (5, 1)])
def test_corpus_rejects_bad_arguments(count, n_max):
    with pytest.raises(ValueError):
        proposition_corpus(1, count, n_max)


def test_suite_is_deterministic():
    a = run_proposition_suite(11, 40, 6)
    b = run_proposition_suite(11, 40, 6)
    assert a == b
    assert a["all_pass"]
    assert a["prop1"]["pass"] == 40 and a["prop2_3"]["pass"] == 40
    assert run_proposition_suite(12, 40, 6) != a
