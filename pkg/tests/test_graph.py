import numpy as np
import pytest

from pangraph import tensor as T
from pangraph.graph import (BasicBlock, CtrGc, GraphConv, MsTc, graph_mix, load_topology, normalize_adjacency,
                            parse_topology, vanilla_gc)
from pangraph.nn import set_pad_mode
from pangraph.rng import Rng
from pangraph.tensor import Tensor

F64 = np.float64


def features(n=2, t=6, j=5, c=8, seed=0):
    return Tensor(Rng(seed).normal((n, t, j, c)))


def chain_adjacency(j):
    return load_topology(f"chain{j}").adjacency + np.eye(j)


def test_normalize_two_nodes():
    np.testing.assert_allclose(normalize_adjacency([[0, 1], [1, 0]]), [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_normalize_edgeless():
    np.testing.assert_array_equal(normalize_adjacency(np.zeros((4, 4))), np.eye(4))


def test_normalize_path_row_sums():
    a = load_topology("chain6").adjacency
    a_hat = normalize_adjacency(a)
    deg = [1 + sum(a[i]) for i in range(6)]
    for i in range(6):
        expected = sum((1.0 if i == k else a[i][k]) / (deg[i] ** 0.5 * deg[k] ** 0.5) for k in range(6))
        assert abs(a_hat[i].sum() - expected) <= 1e-12


def test_normalize_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        normalize_adjacency([[0, 1], [0, 0]])


def test_shipped_topologies():
    coco, ntu = load_topology("coco17"), load_topology("ntu25")
    assert coco.num_joints == 17 and len(coco.edges) == 18
    assert ntu.num_joints == 25 and len(ntu.edges) == 24
    for topo in (coco, ntu):
        a = topo.adjacency
        assert np.array_equal(a, a.T) and not a.diagonal().any()


def test_parse_topology_comments_and_errors(tmp_path):
    topo = parse_topology("# header\n0 1  # bone\n\n1 2\n")
    assert topo.num_joints == 3 and topo.edges == [(0, 1), (1, 2)]
    path = tmp_path / "t.txt"
    path.write_text("0 1\n1 2\n2 3\n")
    assert load_topology(str(path)).num_joints == 4
    with pytest.raises(ValueError, match="line 1"):
        parse_topology("0 1 2\n")
    with pytest.raises(ValueError, match="self-loop"):
        parse_topology("1 1\n")


def test_vanilla_gc_identity_and_average():
    h = features(j=4, c=3)
    out = vanilla_gc(h, np.eye(4), Tensor(np.eye(3)), activation=None)
    np.testing.assert_array_equal(out.data, h.data)
    w = Tensor(Rng(1).normal((3, 2)))
    avg = vanilla_gc(h, np.full((4, 4), 0.25), w, activation=None).data
    expected = h.data.mean(axis=2, keepdims=True) @ w.data
    np.testing.assert_allclose(avg, np.broadcast_to(expected, avg.shape), atol=1e-12)


def test_vanilla_gc_loop_oracle():
    r = Rng(2)
    h, a, w = r.normal((1, 1, 4, 3)), r.normal((4, 4)), r.normal((3, 2))
    out = vanilla_gc(Tensor(h), a, Tensor(w)).data
    expected = np.zeros((4, 2))
    for u in range(4):
        for o in range(2):
            acc = 0.0
            for v in range(4):
                for c in range(3):
                    acc += a[u, v] * h[0, 0, v, c] * w[c, o]
            expected[u, o] = max(acc, 0.0)
    np.testing.assert_allclose(out[0, 0], expected, atol=1e-12)


def test_ctr_gc_lambda_zero_is_shared_topology_bitwise():
    gc = CtrGc(8, 12, chain_adjacency(5), Rng(3), dtype=F64)
    gc.topology.data += Rng(4).normal((5, 5))
    h = features()
    lam = Tensor(np.zeros(1))
    refined = gc.refined_topology(h, lam).data
    assert np.array_equal(refined, np.broadcast_to(gc.topology.data[:, :, None], refined.shape))
    assert np.array_equal(gc(h, lam).data, gc(h, None).data)
    v = h.data @ gc.value.weight.data + gc.value.bias.data
    np.testing.assert_allclose(gc(h, lam).data, np.einsum("uv,ntvc->ntuc", gc.topology.data, v), atol=1e-12)


def tied(seed):
    gc = CtrGc(8, 12, chain_adjacency(5), Rng(seed), dtype=F64)
    gc.phi.weight.data[...] = gc.psi.weight.data
    gc.phi.bias.data[...] = gc.psi.bias.data
    gc.xi.bias.data[...] = 0
    return gc


def test_ctr_gc_tied_projections_collapse_on_joint_constant_input():
    gc = tied(5)
    row = Rng(6).normal((2, 6, 1, 8))
    h = Tensor(np.repeat(row, 5, axis=2))
    np.testing.assert_allclose(gc.correlations(h).data, 0.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(gc(h, Tensor([3.7])).data, gc(h, None).data, rtol=0, atol=1e-12)


def test_ctr_gc_tied_projections_give_antisymmetric_correlations():
    m = tied(7).correlations(features()).data
    np.testing.assert_array_equal(m, -m.transpose(0, 2, 1, 3))
    assert not np.diagonal(m, axis1=1, axis2=2).any()


def test_ctr_gc_hand_unrolled():
    j, t, c_in, c_out = 3, 2, 4, 2
    gc = CtrGc(c_in, c_out, chain_adjacency(j), Rng(6), dtype=F64)
    assert gc.psi.weight.shape == (4, 1)
    for p in gc.parameters():
        p.data[...] = Rng(7).child(p.name or str(id(p))).normal(p.shape)
    lam = 0.7
    h = Rng(8).normal((1, t, j, c_in))
    out = gc(Tensor(h), Tensor([lam])).data

    def proj(x, lin, i):
        return sum(x[c] * lin.weight.data[c, i] for c in range(len(x))) + lin.bias.data[i]

    pooled = [[sum(h[0, s, u, c] for s in range(t)) / t for c in range(c_in)] for u in range(j)]
    expected = np.zeros((t, j, c_out))
    for s in range(t):
        for u in range(j):
            for o in range(c_out):
                acc = 0.0
                for v in range(j):
                    m = np.tanh(proj(pooled[u], gc.psi, 0) - proj(pooled[v], gc.phi, 0))
                    adj = lam * (m * gc.xi.weight.data[0, o] + gc.xi.bias.data[o]) + gc.topology.data[u, v]
                    acc += adj * proj(h[0, s, v], gc.value, o)
                expected[s, u, o] = acc
    np.testing.assert_allclose(out[0], expected, rtol=0, atol=1e-10)


def test_graph_conv_no_gc_has_no_topology():
    gc = GraphConv(8, 8, chain_adjacency(5), Rng(0), variant="no-gc", dtype=F64)
    assert not any("topology" in n or n.endswith("lam") for n, _ in gc.named_parameters())


def test_ms_tc_shape_and_divisibility():
    tc = MsTc(16, Rng(0), dtype=F64)
    assert tc(features(c=16)).shape == (2, 6, 5, 16)
    with pytest.raises(ValueError, match="divisible"):
        MsTc(10, Rng(0))


def test_ms_tc_stride_halves_time():
    tc = MsTc(8, Rng(0), stride=2, dtype=F64)
    assert tc(features(t=32)).shape[1] == 16
    assert tc(features(t=64)).shape[1] == 32


def test_ms_tc_constant_in_time():
    tc = MsTc(8, Rng(1), dtype=F64)
    set_pad_mode(tc, "circular")
    frame = Rng(2).normal((2, 1, 5, 8))
    out = tc(Tensor(np.repeat(frame, 7, axis=1))).data
    np.testing.assert_allclose(out, np.broadcast_to(out[:, :1], out.shape), atol=1e-12)


@pytest.mark.parametrize("shift", [1, 3])
def test_ms_tc_shift_equivariance(shift):
    tc = MsTc(8, Rng(3), dtype=F64)
    set_pad_mode(tc, "circular")
    h = features(t=9)
    base = tc(h).data
    shifted = tc(Tensor(np.roll(h.data, shift, axis=1))).data
    np.testing.assert_allclose(shifted, np.roll(base, shift, axis=1), atol=1e-12)


def test_zero_init_block_is_identity():
    block = BasicBlock(8, 8, chain_adjacency(5), Rng(4), dtype=F64)
    for bn in [block.gc.bn] + block.tc.output_bns():
        bn.gamma.data[...] = 0
    h = features()
    np.testing.assert_array_equal(block(h).data, h.data)


def test_block_is_composition_of_parts():
    block = BasicBlock(8, 12, chain_adjacency(5), Rng(5), stride=2, dtype=F64)
    block.eval()
    h = features()
    sub = h.data[:, ::2] @ block.res.weight.data + block.res.bias.data
    bn = block.res_bn
    rm, rv = bn.buffers["running_mean"], bn.buffers["running_var"]
    res = (sub - rm) / np.sqrt(rv + bn.eps) * bn.gamma.data + bn.beta.data
    np.testing.assert_allclose(block(h).data, block.tc(block.gc(h)).data + res, atol=1e-12)


def test_channel_transition_uses_projection():
    block = BasicBlock(256, 512, chain_adjacency(5), Rng(6))
    assert block.res is not None and block.res.weight.shape == (256, 512)
    assert block(features(n=1, t=4, c=256)).shape == (1, 4, 5, 512)
    assert BasicBlock(8, 8, chain_adjacency(5), Rng(6)).res is None


@pytest.mark.parametrize("variant", ["full", "no-gc", "no-tc"])
def test_block_joint_permutation_equivariance(variant):
    topo = load_topology("chain5")
    perm = np.array([3, 0, 4, 1, 2])
    adj = topo.adjacency + np.eye(5)
    padj = topo.permuted(perm).adjacency + np.eye(5)
    a = BasicBlock(8, 12, adj, Rng(7), variant=variant, dtype=F64)
    b = BasicBlock(8, 12, padj, Rng(7), variant=variant, dtype=F64)
    for blk in (a, b):
        for _, p in blk.named_parameters():
            if p.name.endswith("lam"):
                p.data[...] = 0.4
    h = features()
    np.testing.assert_allclose(b(Tensor(h.data[:, :, perm])).data,
                               a(h).data[:, :, perm], atol=1e-10)


def test_no_tc_block_broadcasts_over_time():
    block = BasicBlock(8, 8, chain_adjacency(5), Rng(8), variant="no-tc", dtype=F64)
    out = block(features()).data - block.residual(features()).data
    np.testing.assert_allclose(out, np.broadcast_to(out[:, :1], out.shape), atol=1e-12)


def test_graph_mix_matches_einsum():
    h = features()
    a = Rng(9).normal((5, 5))
    np.testing.assert_allclose(graph_mix(h, a).data, np.einsum("uv,ntvc->ntuc", a, h.data), atol=1e-12)


def test_unknown_variant():
    with pytest.raises(ValueError):
        BasicBlock(8, 8, chain_adjacency(5), Rng(0), variant="bogus")
    with pytest.raises(T.ShapeError):
        CtrGc(8, 8, chain_adjacency(5), Rng(0))(features(c=6), None)
