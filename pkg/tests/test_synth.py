import hashlib

import numpy as np
import pytest

from pangraph.sampling import guided_sample
from pangraph.synth import (Generator, SynthSpec, class_motifs, generate, generate_arrays, load_dataset,
                            parse_spec_text, read_manifest, resample_frames, spec_text, temporal_class_ids,
                            temporal_cycles)


def small(**kw):
    base = dict(num_classes=4, per_class=5, frames=8, joints=5, grid_h=4, grid_w=4, channels=6, patch_size=8,
                seed=7)
    base.update(kw)
    return SynthSpec(**base)


def test_motifs_are_distinct():
    spec = SynthSpec()
    keys = {(m.tobytes(), c) for m, c in class_motifs(spec)}
    assert len(keys) == spec.num_classes
    assert temporal_cycles(4, 32) == [1, 3, 5, 7]


def test_class_balance_and_splits():
    ds = generate_arrays(small())
    counts = np.bincount(ds.labels)
    assert (counts == 5).all()
    assert (np.bincount(ds.labels[ds.indices("val")]) == 1).all()


def test_split_disjointness():
    ds = generate_arrays(small(per_class=10))
    train = {ds.sample_hash(i) for i in ds.indices("train")}
    val = {ds.sample_hash(i) for i in ds.indices("val")}
    assert not train & val and len(train) + len(val) == len(ds)


def test_skel2d_is_projection_of_skel3d():
    spec = small()
    gen = Generator(spec)
    s = gen.sample(3)
    expected = s.skel3d.coords[..., :2].astype(np.float64) * spec.pixels_per_metre + [spec.width / 2, spec.height / 2]
    np.testing.assert_allclose(s.skel2d.coords, expected, atol=1e-3)


def test_noiseless_motif_is_linearly_separable():
    spec = small(noise=0.0, per_class=6)
    gen = Generator(spec)
    feats, labels = [], []
    for i in range(gen.size):
        s = gen.sample(i)
        tokens = guided_sample(s.grid, s.skel2d).data[:, 0].astype(np.float64)   # T, J, C
        proj = np.einsum("tjc,jc->tj", tokens, gen.signal)
        spectrum = np.abs(np.fft.rfft(proj, axis=0))
        feats.append(spectrum.reshape(-1))
        labels.append(s.label)
    x = np.hstack([np.array(feats), np.ones((len(feats), 1))])
    y = np.eye(spec.num_classes)[labels]
    w, *_ = np.linalg.lstsq(x, y, rcond=None)
    assert ((x @ w).argmax(axis=1) == labels).all()


def test_frame_shuffle_destroys_temporal_identity():
    spec = small(noise=0.0, num_classes=4, frames=16)
    gen = Generator(spec)
    perm = np.random.default_rng(0).permutation(spec.frames)
    ids = temporal_class_ids(spec)
    for i in range(gen.size):
        s = gen.sample(i)
        if s.label not in ids:
            continue
        proj = np.einsum("tjc,jc->tj", guided_sample(s.grid, s.skel2d).data[:, 0], gen.signal)
        _, cycles = gen.motifs[s.label]
        peak = np.abs(np.fft.rfft(proj - proj.mean(0), axis=0)).sum(1).argmax()
        shuffled = np.abs(np.fft.rfft(proj[perm] - proj.mean(0), axis=0)).sum(1).argmax()
        assert peak == cycles
        assert shuffled != cycles


def test_locality_of_guided_features():
    spec = small()
    s = Generator(spec).sample(2)
    base = guided_sample(s.grid, s.skel2d)
    keep = np.zeros((spec.frames, spec.grid_h * spec.grid_w), dtype=bool)
    for t in range(spec.frames):
        keep[t, base.indices[t].reshape(-1)] = True
    s.grid.data[~keep.reshape(spec.frames, spec.grid_h, spec.grid_w)] = 0
    np.testing.assert_array_equal(guided_sample(s.grid, s.skel2d).data, base.data)


def test_out_of_frame_excursions_happen():
    spec = SynthSpec(per_class=10)
    gen = Generator(spec)
    coords = np.stack([gen.project(*gen.skeleton3d(i)) for i in range(gen.size)])
    outside = (coords[..., 0] < 0) | (coords[..., 0] >= spec.width) | (coords[..., 1] < 0) | (coords[..., 1] >= spec.height)
    assert outside.any() and outside.mean() < 0.2


def test_second_person_padding():
    ds = generate_arrays(small(persons=2, per_class=8))
    absent = ~ds.valid[:, 0, 1]
    assert absent.any() and (~absent).any()
    assert (ds.skel2d[absent][:, :, 1] == 0).all() and (ds.skel3d[absent][:, :, 1] == 0).all()


def test_generate_is_deterministic_and_loads(tmp_path):
    spec = small()
    a, b = generate(spec, tmp_path / "a"), generate(spec, tmp_path / "b")

    def digest(root):
        return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(root.rglob("*")) if p.is_file()}

    assert digest(a) == digest(b)
    records = read_manifest(a / "manifest.tsv")
    assert len(records) == 20 and records[0][1] == "samples/s00000"
    loaded = load_dataset(a)
    mem = generate_arrays(spec)
    assert loaded.grids.tobytes() == mem.grids.tobytes()
    assert loaded.ids == mem.ids and (loaded.labels == mem.labels).all()


def test_spec_text_round_trip_and_validation():
    spec = small(noise=0.25)
    assert parse_spec_text(spec_text(spec)) == spec
    with pytest.raises(ValueError, match="unknown"):
        parse_spec_text("bogus=1\n")
    with pytest.raises(ValueError):
        small(frames=4, num_classes=8)
    with pytest.raises(ValueError):
        small(per_class=0)


def test_resample_frames_duplicates():
    x = np.arange(3)[None, :, None]
    np.testing.assert_array_equal(resample_frames(x, 6)[0, :, 0], [0, 0, 1, 1, 2, 2])
    assert resample_frames(x, 3) is x
