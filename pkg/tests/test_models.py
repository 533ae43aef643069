import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pangraph import tensor as T
from pangraph.gradcheck import check_model
from pangraph.graph import load_topology
from pangraph.models import (PAN, Batch, Fusion, ModelConfig, PANEnsemble, PANUnified, SkeletonPath,
                             alignment_loss, build_model, centre_sequences, combine_scores, count_parameters, micro_batch,
                             micro_config)
from pangraph.rng import Rng
from pangraph.tensor import Tensor


def run(model, batch):
    model.eval()
    return model(batch)


def test_logit_shape_contract():
    for kw in ({}, dict(sampling="even"), dict(no_calibration=True), dict(no_tc=True), dict(no_pan=True),
               dict(variant="ensemble"), dict(variant="unified", fusion="attention")):
        cfg = micro_config(**kw)
        batch = micro_batch(cfg, n=3)
        assert run(build_model(cfg), batch).logits.shape == (3, cfg.num_classes)


def test_replicated_persons_give_identical_person_logits():
    cfg = micro_config()
    batch = micro_batch(cfg)
    batch.skel2d[:, :, 1] = batch.skel2d[:, :, 0]
    out = run(build_model(cfg), batch)
    np.testing.assert_allclose(out.person_logits.data[:, 0], out.person_logits.data[:, 1], atol=1e-12)
    np.testing.assert_allclose(out.logits.data, out.person_logits.data[:, 0], atol=1e-12)


def test_even_sampling_ignores_the_skeleton():
    cfg = micro_config(sampling="even")
    batch = micro_batch(cfg)
    model = build_model(cfg)
    a = run(model, batch).logits.data
    batch.skel2d = None
    np.testing.assert_array_equal(run(model, batch).logits.data, a)


def test_guided_needs_a_2d_skeleton():
    cfg = micro_config()
    batch = micro_batch(cfg)
    batch.skel2d = None
    with pytest.raises(ValueError, match="2-D skeleton"):
        build_model(cfg)(batch)


def test_absent_person_is_ignored_by_aggregation():
    cfg = micro_config()
    model = build_model(cfg).eval()
    batch = micro_batch(cfg)
    batch.valid[:, :, 1] = False
    out = model(batch)
    np.testing.assert_allclose(out.logits.data, out.person_logits.data[:, 0], atol=1e-12)


def test_reference_scale_parameter_identities():
    base = ModelConfig()
    assert count_parameters(base.replace(no_pan=True))[0] == 384 * 120 + 120 == 46_200
    delta = count_parameters(base.replace(in_channels=768))[0] - count_parameters(base)[0]
    assert delta == 4 * 384 * 256 == 393_216


def test_no_calibration_has_no_attention_parameters():
    total, parts = count_parameters(ModelConfig(no_calibration=True))
    assert not any("calib" in name for name, _ in build_model(micro_config(no_calibration=True)).named_parameters())
    assert parts["encoder"] == 384 * 256


def test_breakdown_sums_to_total():
    total, parts = count_parameters(micro_config(variant="ensemble"))
    assert sum(parts.values()) == total == build_model(micro_config(variant="ensemble")).num_parameters()
    assert any(k.startswith("rgb.") for k in parts) and any(k.startswith("skel.") for k in parts)


def test_fusion_parameter_ordering():
    counts = [count_parameters(ModelConfig(variant="unified", fusion=f))[0] for f in ("sum", "concat", "attention")]
    assert counts[0] < counts[1] < counts[2]


def test_skeleton_path_halves_time_and_masks():
    cfg = micro_config(skel_block_outputs=(8, 8, 12))
    path = SkeletonPath(cfg, load_topology("chain5").adjacency + np.eye(5), Rng(0), np.float64)
    batch = micro_batch(cfg)
    batch.skel3d[0, :, 1] = 0
    feat, persons = path(batch)
    assert feat.shape == (2 * 2, cfg.t_skel // 2, 5, 12)
    assert not feat.data[1].any() and feat.data[0].any()
    assert persons.tolist() == [[True, False], [True, True]]


def test_skeleton_path_rejects_wrong_arity():
    cfg = micro_config(variant="ensemble")
    batch = micro_batch(cfg)
    batch.skel3d = batch.skel3d[..., :2]
    with pytest.raises(T.ShapeError, match="3-D"):
        build_model(cfg)(batch)


def test_skeleton_path_joint_permutation_equivariance():
    cfg = micro_config()
    topo = load_topology("chain5")
    perm = np.array([2, 4, 0, 1, 3])
    a = SkeletonPath(cfg, topo.adjacency + np.eye(5), Rng(1), np.float64)
    b = SkeletonPath(cfg, topo.permuted(perm).adjacency + np.eye(5), Rng(1), np.float64)
    for m in (a, b):
        for name, p in m.named_parameters():
            if name.endswith("lam"):
                p.data[...] = 0.3
    batch = micro_batch(cfg)
    fa, _ = a(batch)
    batch.skel3d = batch.skel3d[:, :, :, perm]
    fb, _ = b(batch)
    np.testing.assert_allclose(fb.data, fa.data[:, :, perm], atol=1e-10)


def test_ensemble_degenerate_path():
    cfg = micro_config(variant="ensemble")
    model = build_model(cfg).eval()
    batch = micro_batch(cfg, n=4)
    for p in model.skel.head.parameters():
        p.data[...] = 0
    rgb = model.rgb(batch).logits.data
    np.testing.assert_array_equal(model(batch).logits.data.argmax(-1), rgb.argmax(-1))


def test_ensemble_of_identical_paths_doubles_logits():
    cfg = micro_config(variant="ensemble")
    model = build_model(cfg).eval()
    model.skel = model.rgb
    batch = micro_batch(cfg)
    single = model.rgb(batch).logits.data
    np.testing.assert_allclose(model(batch).logits.data, 2 * single, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_ensemble_argmax_invariant_to_common_scale(seed, scale):
    r = Rng(seed)
    a, b = r.normal((3, 5)), r.normal((3, 5))
    ref = combine_scores(Tensor(a), Tensor(b)).data.argmax(-1)
    scaled = combine_scores(Tensor(a * scale), Tensor(b * scale)).data.argmax(-1)
    np.testing.assert_array_equal(scaled, ref)


def test_softmax_score_summing():
    a, b = Tensor([[1.0, 2.0]]), Tensor([[3.0, 0.0]])
    out = combine_scores(a, b, "softmax").data
    np.testing.assert_allclose(out.sum(), 2.0)


def test_unified_with_zero_skeleton_equals_pan():
    cfg = micro_config(variant="unified")
    unified = build_model(cfg).eval()
    pan = build_model(cfg.replace(variant="pan")).eval()
    assert isinstance(unified, PANUnified) and isinstance(pan, PAN)
    batch = micro_batch(cfg)
    batch.skel3d[...] = 0
    np.testing.assert_allclose(unified(batch).logits.data, pan(batch).logits.data, rtol=0, atol=1e-12)


def test_concat_fusion_with_identity_block_weights():
    r = Rng(3)
    feat_r, feat_s = Tensor(r.normal((2, 3, 5, 8))), Tensor(r.normal((2, 3, 5, 6)))
    concat = Fusion("concat", 8, 6, r, np.float64)
    concat.mix.weight.data[...] = np.vstack([np.eye(8), np.zeros((6, 8))])
    concat.mix.bias.data[...] = 0
    summed = Fusion("sum", 8, 6, r, np.float64)
    rgb_term = summed(feat_r, feat_s).data - summed.proj(summed.norm(feat_s)).data
    np.testing.assert_allclose(concat(feat_r, feat_s).data, rgb_term, atol=1e-12)


def test_fusion_extent_mismatch():
    r = Rng(0)
    with pytest.raises(T.ShapeError):
        Fusion("sum", 4, 4, r, np.float64)(Tensor(np.ones((2, 3, 5, 4))), Tensor(np.ones((2, 4, 5, 4))))


def test_alignment_loss():
    r = Rng(4)
    a = r.normal((2, 3, 4))
    assert alignment_loss(Tensor(a), Tensor(a)).item() == 0.0
    assert alignment_loss(Tensor(a + 0.7), Tensor(a)).item() == pytest.approx(0.49, abs=1e-12)
    b = r.normal((2, 3, 4))
    acc = 0.0
    for i in range(2):
        for j in range(3):
            for k in range(4):
                acc += (a[i, j, k] - b[i, j, k]) ** 2
    assert alignment_loss(Tensor(a), Tensor(b)).item() == pytest.approx(acc / 24, abs=1e-12)
    with pytest.raises(T.ShapeError):
        alignment_loss(Tensor(a), Tensor(a[:1]))


@pytest.mark.parametrize("alignment", ["pre", "post"])
def test_alignment_produces_aux_loss(alignment):
    cfg = micro_config(alignment=alignment)
    out = build_model(cfg)(micro_batch(cfg))
    assert out.aux_loss is not None and out.aux_loss.item() > 0


@pytest.mark.parametrize("changes, match", [
    (dict(no_gc=True, no_tc=True), "separate"),
    (dict(variant="unified", no_pan=True), "no_pan"),
    (dict(alignment="pre", variant="ensemble"), "alignment"),
    (dict(fusion="bogus"), "fusion"),
    (dict(heads=3), "heads"),
    (dict(t_skel=6, variant="ensemble"), "t_skel"),
])
def test_config_validation(changes, match):
    with pytest.raises(ValueError, match=match):
        micro_config(**changes)


def test_digest_is_stable_and_sensitive():
    assert micro_config().digest() == micro_config().digest()
    assert micro_config().digest() != micro_config(seed=4).digest()


def test_batch_defaults_extents():
    batch = Batch(grid=np.zeros((1, 2, 3, 4, 5)), patch_size=7)
    assert (batch.height, batch.width) == (21, 28)


def test_micro_gradcheck_smoke():
    report = check_model(micro_config(), max_entries=2)
    assert report.ok, [(p.name, p.max_rel_error) for p in report.failures]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_centring_removes_global_translation(seed, shift):
    s = Rng(seed).normal((2, 4, 2, 5, 3))
    s[1, :, 1] = 0                               # sample 1 has one person
    persons = np.any(s != 0, axis=(1, 3, 4))
    moved = np.where(persons[:, None, :, None, None], s + np.array(shift), 0)
    np.testing.assert_allclose(centre_sequences(moved, persons), centre_sequences(s, persons), atol=1e-9)
    out = centre_sequences(s, persons)
    assert np.all(out[1, :, 1] == 0)
    np.testing.assert_allclose(out[0, 0].mean(axis=(0, 1)), 0, atol=1e-12)     # both persons present
    np.testing.assert_allclose(out[1, 0, 0].mean(axis=0), 0, atol=1e-12)
