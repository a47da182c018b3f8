"""Architecture builders, forward evaluation, parameter counts, weight files."""

import numpy as np
import pytest

from nivc import graphs
from nivc.errors import (
    BadMagicError,
    ShapeMismatchError,
    TruncatedFileError,
    VersionMismatchError,
    WeightShapeError,
)
from nivc.training import init_weights

from conftest import zero_store


def oracle_conv(x, w, b):
    """Straight-line "same" convolution used only by tests: explicit kernel
    offset loops over padded input, float64 accumulation."""
    out_ch, in_ch, kh, kw = w.shape
    _, h, wd = x.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), ((kh - 1) // 2,) * 2, ((kw - 1) // 2,) * 2))
    out = np.zeros((out_ch, h, wd))
    for o in range(out_ch):
        for c in range(in_ch):
            for u in range(kh):
                for v in range(kw):
                    out[o] += w[o, c, u, v] * xp[c, u:u + h, v:v + wd]
        out[o] += b[o]
    return out


def oracle_inception1_forward(store, x):
    """Hand-written forward of the one-block filter net, no graph machinery."""
    def conv(name, t, act=True):
        w, b = store[name]
        y = oracle_conv(t, w.astype(np.float64), b.astype(np.float64))
        return np.maximum(y, 0) if act else y

    t = conv("pre2", conv("pre1", x.astype(np.float64)))
    a = conv("b1_a1x1", t)
    b0 = conv("b1_b1x1", t)
    bcat = np.concatenate([conv("b1_b1x3", b0), conv("b1_b3x1", b0)], axis=0)
    c1 = conv("b1_c3x3", conv("b1_c1x1", t))
    ccat = np.concatenate([conv("b1_c1x3", c1), conv("b1_c3x1", c1)], axis=0)
    block = np.concatenate([a, bcat, ccat], axis=0)
    return conv("post", block, act=False) + x.astype(np.float64)


class TestInceptionFilter:
    def test_parameter_count_12_blocks(self):
        g = graphs.build_inception_filter(12)
        assert graphs.count_parameters(g, "with_bias") == 475_233

    def test_parameter_count_small(self):
        assert graphs.count_parameters(graphs.build_inception_filter(1), "with_bias") == 66_913
        assert graphs.count_parameters(graphs.build_inception_filter(0), "with_bias") == 38_145

    def test_per_block_contributions(self):
        g = graphs.build_inception_filter(12)

        def group(prefix):
            return sum(int(np.prod(n.weight_shape())) + n.out_ch
                       for n in g.weighted_nodes() if n.id.startswith(prefix))

        assert group("pre") == 37_568
        assert group("b1_") == 27_904
        for i in range(2, 13):
            assert group(f"b{i}_") == 37_120
        assert group("post") == 1_441

    def test_block_channel_counts(self):
        g = graphs.build_inception_filter(3)
        assert g.channels_of("pre2_relu") == 64
        for i in (1, 2, 3):
            assert g.channels_of(f"b{i}_out") == 160

    def test_zero_weights_forward_is_identity(self):
        g = graphs.build_inception_filter(2)
        x = np.random.default_rng(0).random((1, 6, 6)).astype(np.float32)
        out = graphs.forward(g, zero_store(g), x)
        assert np.array_equal(out, x)

    def test_forward_matches_straight_line_oracle(self):
        g = graphs.build_inception_filter(1)
        store = init_weights(g, np.random.default_rng(13))
        x = np.random.default_rng(14).random((1, 6, 6)).astype(np.float32)
        got = graphs.forward(g, store, x)
        want = oracle_inception1_forward(store, x)
        assert np.max(np.abs(got.astype(np.float64) - want)) <= 1e-5

    def test_forward_repeat_bit_identical(self):
        g = graphs.build_inception_filter(1)
        store = init_weights(g, np.random.default_rng(1))
        x = np.random.default_rng(2).random((1, 8, 5)).astype(np.float32)
        assert np.array_equal(graphs.forward(g, store, x), graphs.forward(g, store, x))

    def test_exactly_one_residual_node(self):
        g = graphs.build_inception_filter(12)
        assert sum(1 for n in g.nodes if n.kind == "residual_add_input") == 1

    def test_bias_count_difference(self):
        for g in (graphs.build_inception_filter(12), graphs.build_vrcnn(), graphs.build_arcnn()):
            diff = (graphs.count_parameters(g, "with_bias")
                    - graphs.count_parameters(g, "without_bias"))
            assert diff == sum(n.out_ch for n in g.weighted_nodes())


class TestBaselines:
    def test_vrcnn_counts(self):
        g = graphs.build_vrcnn()
        assert graphs.count_parameters(g, "without_bias") == 54_512
        assert graphs.count_parameters(g, "with_bias") == 54_673

    def test_vrcnn_zero_weights_identity(self):
        g = graphs.build_vrcnn()
        x = np.random.default_rng(3).random((1, 7, 7)).astype(np.float32)
        assert np.array_equal(graphs.forward(g, zero_store(g), x), x)

    def test_arcnn_counts(self):
        g = graphs.build_arcnn()
        assert graphs.count_parameters(g, "without_bias") == 106_448
        assert graphs.count_parameters(g, "with_bias") == 106_561

    def test_arcnn_output_shape_follows_input(self):
        g = graphs.build_arcnn()
        store = init_weights(g, np.random.default_rng(4))
        for h, w in ((5, 9), (12, 3)):
            x = np.random.default_rng(5).random((1, h, w)).astype(np.float32)
            assert graphs.forward(g, store, x).shape == (1, h, w)

    def test_arcnn_has_no_residual(self):
        assert all(n.kind != "residual_add_input" for n in graphs.build_arcnn().nodes)


class TestFcPredictor:
    def test_geometry_n32_k4(self):
        g = graphs.build_fc_predictor(32, 4, (512, 512))
        assert g.input_channels == 36 ** 2 - 32 ** 2 == 272
        assert g.output_channels == 1024

    def test_zero_weights_constant_prediction(self):
        g = graphs.build_fc_predictor(8, 4, (16,))
        store = zero_store(g)
        w, b = store["out"]
        store["out"] = (w, np.full_like(b, 0.25))
        x = np.random.default_rng(6).random((80, 1, 1)).astype(np.float32)
        out = graphs.forward(g, store, x)
        assert np.all(out == np.float32(0.25))

    def test_parameter_count_n8_k4(self):
        # analytic: 80*128+128 + 128*128+128 + 128*64+64
        g = graphs.build_fc_predictor(8, 4, (128, 128))
        assert graphs.count_parameters(g, "with_bias") == 35_136

    def test_rejects_bad_geometry(self):
        with pytest.raises(ShapeMismatchError):
            graphs.build_fc_predictor(5, 4)
        with pytest.raises(ShapeMismatchError):
            graphs.build_fc_predictor(8, 0)


class TestWeightFiles:
    def test_roundtrip_bit_exact(self, tmp_path):
        g = graphs.build_inception_filter(1)
        store = init_weights(g, np.random.default_rng(7))
        path = tmp_path / "w.nnwt"
        graphs.save_weights(store, g, path)
        loaded = graphs.load_weights(path, g)
        assert loaded.tag == g.name
        for node in g.weighted_nodes():
            for a, b in zip(store[node.id], loaded[node.id]):
                assert np.array_equal(a, b) and a.dtype == b.dtype == np.float32

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.nnwt"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(BadMagicError):
            graphs.load_weights(path)

    def test_version_mismatch(self, tmp_path):
        g = graphs.build_fc_predictor(8, 4, (16,))
        path = tmp_path / "w.nnwt"
        graphs.save_weights(init_weights(g, np.random.default_rng(8)), g, path)
        data = bytearray(path.read_bytes())
        data[4] = 9
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatchError):
            graphs.load_weights(path)

    def test_truncation_names_layer(self, tmp_path):
        g = graphs.build_fc_predictor(8, 4, (16,))
        path = tmp_path / "w.nnwt"
        graphs.save_weights(init_weights(g, np.random.default_rng(9)), g, path)
        path.write_bytes(path.read_bytes()[:-40])  # cut into the last layer
        with pytest.raises(TruncatedFileError) as err:
            graphs.load_weights(path)
        assert "out" in str(err.value)

    def test_shape_mismatch_against_other_graph(self, tmp_path):
        g = graphs.build_fc_predictor(8, 4, (16,))
        path = tmp_path / "w.nnwt"
        graphs.save_weights(init_weights(g, np.random.default_rng(10)), g, path)
        with pytest.raises(WeightShapeError):
            graphs.load_weights(path, graphs.build_vrcnn())

    def test_graph_from_tag_roundtrip(self):
        for build in (lambda: graphs.build_inception_filter(12),
                      lambda: graphs.build_inception_filter(2, width_scale=0.5),
                      graphs.build_vrcnn, graphs.build_arcnn,
                      lambda: graphs.build_fc_predictor(16, 4, (64, 32))):
            g = build()
            g2 = graphs.graph_from_tag(g.name)
            assert [n.id for n in g2.nodes] == [n.id for n in g.nodes]
            assert graphs.count_parameters(g2) == graphs.count_parameters(g)


class TestModelBank:
    def _bank(self):
        g = graphs.build_inception_filter(0)
        stores = {qp: init_weights(g, np.random.default_rng(qp)) for qp in graphs.BAND_QPS}
        return stores, graphs.make_model_bank(stores)

    def test_band_selection(self):
        stores, bank = self._bank()
        assert graphs.select_model(bank, 22) is stores[22]
        assert graphs.select_model(bank, 37) is stores[37]
        assert graphs.select_model(bank, 24) is stores[22]
        assert graphs.select_model(bank, 25) is stores[27]
        assert graphs.select_model(bank, 0) is stores[22]
        assert graphs.select_model(bank, 51) is stores[37]

    def test_bands_cover_all_qps(self):
        _, bank = self._bank()
        for qp in range(52):
            graphs.select_model(bank, qp)

    def test_invalid_bank_rejected(self):
        g = graphs.build_inception_filter(0)
        s = init_weights(g, np.random.default_rng(0))
        with pytest.raises(ShapeMismatchError):
            graphs.ModelBank(((0, 30, s), (25, 51, s)))  # overlap
        with pytest.raises(ShapeMismatchError):
            graphs.ModelBank(((0, 40, s),))  # gap
