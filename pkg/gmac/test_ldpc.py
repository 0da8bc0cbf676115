# gmac/test_ldpc.py
"""
Tests for degree quantization, PEG construction, GF(2) encoding and graph files.
"""
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from gmac.errors import DomainError, GraphError
from gmac.models import DegreeDistribution
from gmac.codedesign import reference_bundle
from gmac.ldpc import (
    TannerGraph, encode, extract_message, girth, has_four_cycles, make_encoder, parity_check_matrix,
    peg_construct, quantize_degrees, read_graph, syndrome, syndrome_ok, write_graph,
)

MC10_U1L1 = DegreeDistribution(lambdas={2: 0.3609, 3: 0.4311, 34: 0.1771, 35: 0.0309}, d_c=6)


@pytest.fixture(scope="module")
def regular_graph():
    var_degrees, check_degrees = quantize_degrees(200, DegreeDistribution.regular(3, 6))
    return peg_construct(200, var_degrees, check_degrees, seed=4)


class TestQuantizeDegrees:

    def test_irregular_counts(self):
        var_degrees, check_degrees = quantize_degrees(1000, MC10_U1L1)
        assert var_degrees.size == 1000
        assert var_degrees.sum() == check_degrees.sum()
        assert set(np.unique(check_degrees)) <= {5, 6, 7}
        for j, fraction in MC10_U1L1.node_perspective().items():
            assert abs(np.count_nonzero(var_degrees == j) - 1000 * fraction) <= 1.0

    def test_regular(self):
        var_degrees, check_degrees = quantize_degrees(200, DegreeDistribution.regular(3, 6))
        assert np.all(var_degrees == 3)
        assert check_degrees.size == 100 and np.all(check_degrees == 6)

    def test_too_short(self):
        with pytest.raises(DomainError):
            quantize_degrees(50, MC10_U1L1)


class TestTannerGraph:

    def test_validation(self):
        with pytest.raises(GraphError):
            TannerGraph(3, 1, (np.array([0, 3]),))
        with pytest.raises(GraphError):
            TannerGraph(3, 1, (np.array([1, 1]),))
        with pytest.raises(GraphError):
            TannerGraph(3, 2, (np.array([0, 1]),))

    def test_rows_are_sorted(self):
        g = TannerGraph(4, 2, (np.array([2, 0]), np.array([3, 1, 0])))
        assert g.check_neighbors[0].tolist() == [0, 2]
        assert g.var_degrees.tolist() == [2, 1, 1, 1]
        assert g.var_neighbors[0].tolist() == [0, 1]

    def test_small_girths(self):
        square = TannerGraph(2, 2, (np.array([0, 1]), np.array([0, 1])))
        assert girth(square) == 4
        assert has_four_cycles(square)
        path = TannerGraph(3, 2, (np.array([0, 1]), np.array([1, 2])))
        assert girth(path) is None
        assert not has_four_cycles(path)
        hexagon = TannerGraph(3, 3, (np.array([0, 1]), np.array([1, 2]), np.array([0, 2])))
        assert girth(hexagon) == 6


class TestPeg:

    def test_degrees_realized(self, regular_graph):
        assert np.all(regular_graph.var_degrees == 3)
        assert np.all(regular_graph.check_degrees == 6)
        assert regular_graph.num_edges == 600

    def test_deterministic(self, regular_graph):
        var_degrees, check_degrees = quantize_degrees(200, DegreeDistribution.regular(3, 6))
        assert peg_construct(200, var_degrees, check_degrees, seed=4) == regular_graph

    def test_unbalanced(self):
        with pytest.raises(GraphError):
            peg_construct(4, [2, 2, 2, 2], [3, 3])

    def test_irregular(self):
        var_degrees, check_degrees = quantize_degrees(400, MC10_U1L1)
        g = peg_construct(400, var_degrees, check_degrees, seed=1)
        np.testing.assert_array_equal(g.var_degrees, var_degrees)
        assert g.num_edges == check_degrees.sum()
        assert g.check_degrees.max() <= check_degrees.max() + 2

    @pytest.mark.slow
    def test_full_length_rate(self):
        var_degrees, check_degrees = quantize_degrees(10000, MC10_U1L1)
        g = peg_construct(10000, var_degrees, check_degrees, seed=0)
        assert not has_four_cycles(g)
        assert make_encoder(g).rate == pytest.approx(MC10_U1L1.design_rate(), abs=3e-3)


class TestSyndrome:

    def test_matches_dense_product(self, regular_graph):
        h = parity_check_matrix(regular_graph).toarray()
        assert h.shape == (100, 200)
        rng = np.random.default_rng(2)
        for _ in range(5):
            word = rng.integers(0, 2, 200)
            np.testing.assert_array_equal(syndrome(regular_graph, word), h @ word % 2)

    def test_length_mismatch(self, regular_graph):
        with pytest.raises(DomainError):
            syndrome(regular_graph, np.zeros(199, dtype=int))


class TestEncoder:

    def test_codewords_satisfy_checks(self, regular_graph):
        state = make_encoder(regular_graph)
        assert state.k >= 100
        rng = np.random.default_rng(9)
        for _ in range(20):
            message = rng.integers(0, 2, state.k)
            word = encode(state, message)
            assert syndrome_ok(regular_graph, word)
            np.testing.assert_array_equal(extract_message(state, word), message)

    def test_redundant_check(self):
        g = TannerGraph(3, 3, (np.array([0, 1]), np.array([1, 2]), np.array([0, 2])))
        state = make_encoder(g)
        assert state.rank == 2 and state.k == 1 and state.redundant_checks == 1
        assert encode(state, [1]).tolist() == [1, 1, 1]

    def test_wrong_message_length(self, regular_graph):
        state = make_encoder(regular_graph)
        with pytest.raises(DomainError):
            encode(state, np.zeros(state.k + 1, dtype=int))


class TestGraphFiles:

    def test_write_and_read(self, regular_graph, tmp_path):
        path = write_graph(regular_graph, str(tmp_path / "u1_l1.graph"))
        assert read_graph(path) == regular_graph

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.graph"
        path.write_text("10 3 0\n0 1 2\n")
        with pytest.raises(GraphError):
            read_graph(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(GraphError):
            read_graph(str(tmp_path / "absent.graph"))


REFERENCE_CODES = [(name, user, level) for name in ("MC-10", "MC-18", "OPT-18")
                   for level in (1, 2) for user in (1, 2)]


@pytest.fixture(scope="module")
def reference_graphs():
    bundles, graphs = {}, {}

    def build(name, user, level):
        key = (name, user, level)
        if key not in graphs:
            if name not in bundles:
                bundles[name] = reference_bundle(name)
            dd = bundles[name].code(user, level).distribution()
            var_degrees, check_degrees = quantize_degrees(10000, dd)
            graphs[key] = (dd, peg_construct(10000, var_degrees, check_degrees, seed=0))
        return graphs[key]

    return build


@pytest.mark.slow
class TestReferenceGraphs:

    @pytest.mark.parametrize("name,user,level", REFERENCE_CODES)
    def test_girth_at_full_length(self, reference_graphs, name, user, level):
        _, g = reference_graphs(name, user, level)
        assert not has_four_cycles(g)

    @pytest.mark.parametrize("name,user,level", REFERENCE_CODES)
    def test_encoder_on_random_messages(self, reference_graphs, name, user, level):
        dd, g = reference_graphs(name, user, level)
        state = make_encoder(g)
        assert state.rate == pytest.approx(dd.design_rate(), abs=5e-3)
        rng = np.random.default_rng(user * 10 + level)
        for _ in range(1000):
            message = rng.integers(0, 2, state.k)
            word = encode(state, message)
            assert syndrome_ok(g, word)
            np.testing.assert_array_equal(extract_message(state, word), message)
