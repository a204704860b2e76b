import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amfm_faces import dataset as D
from amfm_faces.errors import FormatError, ParameterError


def brute_force_overlaps(rects):
    """Per-pixel membership count, one pixel at a time."""
    counts = np.zeros(45)
    for r in range(250):
        for c in range(450):
            if any(q.x <= c < q.x + q.w and q.y <= r < q.y + q.h for q in rects):
                counts[(r // 50) * 9 + c // 50] += 1
    return counts / 2500


def test_decimate_examples():
    assert D.decimate_frame(np.zeros((480, 858))).shape == (240, 429)
    np.testing.assert_array_equal(D.decimate_frame(np.full((6, 6), 3)), np.full((3, 3), 3))
    checker = np.indices((8, 8)).sum(0) % 2
    np.testing.assert_array_equal(D.decimate_frame(checker), np.zeros((4, 4)))
    np.testing.assert_array_equal(D.decimate_frame(checker, "mean"), np.full((4, 4), 0.5))
    with pytest.raises(ParameterError):
        D.decimate_frame(np.zeros((4, 4)), "median")


def test_pad_to_grid():
    frame = np.ones((240, 429))
    out = D.pad_to_grid(frame)
    assert out.shape == (250, 450)
    assert out[240:].sum() == 0 and out[:, 429:].sum() == 0
    full = np.arange(250 * 450).reshape(250, 450)
    np.testing.assert_array_equal(D.pad_to_grid(full), full)
    with pytest.raises(ParameterError):
        D.pad_to_grid(np.zeros((251, 10)))


def test_split_blocks_layout():
    frame = np.arange(250 * 450, dtype=np.int64).reshape(250, 450)
    blocks = D.split_blocks(frame)
    assert blocks.shape == (45, 50, 50)
    np.testing.assert_array_equal(blocks[0], frame[:50, :50])
    np.testing.assert_array_equal(blocks[44], frame[200:250, 400:450])
    np.testing.assert_array_equal(blocks[10], frame[50:100, 50:100])
    np.testing.assert_array_equal(D.assemble_blocks(blocks), frame)
    with pytest.raises(ParameterError):
        D.split_blocks(np.zeros((250, 449)))


def test_block_overlap_examples():
    r = lambda x, y, w, h: D.FaceRect("v", 0, "p", x, y, w, h)  # noqa: E731
    t = D.block_overlaps([r(0, 0, 50, 50)])
    assert t[0] == 1.0 and t[1:].sum() == 0
    t = D.block_overlaps([r(350, 0, 25, 50)])
    assert t[7] == 0.5 and np.delete(t, 7).sum() == 0
    # overlapping rectangles are not double counted
    t = D.block_overlaps([r(0, 0, 50, 50), r(10, 10, 20, 20)])
    assert t[0] == 1.0
    with pytest.raises(ParameterError):
        D.FaceRect("v", 0, "p", 0, 0, 0, 5)


def test_block_overlaps_vs_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(3):
        rects = [
            D.FaceRect("v", 0, "p", int(rng.integers(-20, 440)), int(rng.integers(-20, 240)),
                       int(rng.integers(1, 90)), int(rng.integers(1, 90)))
            for _ in range(rng.integers(1, 5))
        ]
        np.testing.assert_array_equal(D.block_overlaps(rects), brute_force_overlaps(rects))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 449), st.integers(0, 249), st.integers(1, 120), st.integers(1, 120)),
                min_size=0, max_size=4))
def test_block_overlaps_mass(rects):
    fr = [D.FaceRect("v", 0, "p", *r) for r in rects]
    t = D.block_overlaps(fr)
    assert ((t >= 0) & (t <= 1)).all()
    assert round(t.sum() * 2500) == D.rect_union_mask(fr).sum()


def test_build_dataset(tiny_corpus, tiny_fm_dataset, hilbert_filter, bank):
    frames, rects = tiny_corpus
    ds = tiny_fm_dataset
    assert len(ds) == 4 * 45 and ds.channels == 1 and ds.input_kind == "fm"
    assert ds.blocks.dtype == np.float32
    assert np.abs(ds.blocks).max() <= 1.0
    assert ds.provenance[0] == ("v00", 0, 0, 0) and ds.provenance[44] == ("v00", 0, 4, 8)
    assert ds.targets.max() > 0
    small = {k: frames[k] for k in list(frames)[:1]}
    amfm = D.build_dataset(small, rects, "am-fm", hilbert_filter, bank)
    assert amfm.channels == 2
    np.testing.assert_array_equal(amfm.blocks[..., 1], ds.blocks[:45, ..., 0])
    orig = D.build_dataset(small, rects, "original")
    assert orig.blocks.max() <= 1.0


def test_build_dataset_without_annotations(tiny_corpus):
    frames, _ = tiny_corpus
    small = {k: frames[k] for k in list(frames)[:1]}
    with pytest.warns(UserWarning):
        ds = D.build_dataset(small, None, "original")
    assert not ds.targets.any()
    with pytest.raises(ParameterError):
        D.build_dataset(small, [], "fm")  # fm needs a filter and bank


def test_frame_matrix(tiny_fm_dataset):
    y, keys = tiny_fm_dataset.frame_matrix()
    assert y.shape == (4, 45) and keys[0] == ("v00", 0)
    np.testing.assert_array_equal(y.ravel(), tiny_fm_dataset.targets)
    with pytest.raises(ParameterError):
        tiny_fm_dataset.subset(range(10)).frame_matrix()


def test_dataset_round_trip(tmp_path, tiny_fm_dataset):
    path = tmp_path / "d.afmd"
    D.save_dataset(tiny_fm_dataset, path)
    back = D.load_dataset(path)
    np.testing.assert_array_equal(back.blocks, tiny_fm_dataset.blocks)
    np.testing.assert_array_equal(back.targets, tiny_fm_dataset.targets)
    assert back.provenance == tiny_fm_dataset.provenance
    assert back.input_kind == "fm"


def test_empty_dataset_file(tmp_path):
    empty = D.BlockDataset(np.zeros((0, 50, 50, 1)), np.zeros(0), [], "original")
    D.save_dataset(empty, tmp_path / "e.afmd")
    back = D.load_dataset(tmp_path / "e.afmd")
    assert len(back) == 0


def test_dataset_file_errors(tmp_path, tiny_fm_dataset):
    path = tmp_path / "d.afmd"
    D.save_dataset(tiny_fm_dataset.subset(range(3)), path)
    data = path.read_bytes()
    (tmp_path / "m.afmd").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError) as exc:
        D.load_dataset(tmp_path / "m.afmd")
    assert exc.value.offset == 0
    (tmp_path / "t.afmd").write_bytes(data[:1000])
    with pytest.raises(FormatError):
        D.load_dataset(tmp_path / "t.afmd")
    (tmp_path / "v.afmd").write_bytes(data[:4] + (9).to_bytes(4, "little") + data[8:])
    with pytest.raises(FormatError):
        D.load_dataset(tmp_path / "v.afmd")
    (tmp_path / "s.afmd").write_bytes(b"AF")
    with pytest.raises(FormatError):
        D.load_dataset(tmp_path / "s.afmd")


def test_annotations_round_trip(tmp_path):
    rects = [D.FaceRect("v01", 3, "p0", 1, 2, 3, 4), D.FaceRect("v02", 0, "p1", 10, 20, 30, 40)]
    D.write_annotations(rects, tmp_path / "a.csv")
    assert D.read_annotations(tmp_path / "a.csv") == rects
    (tmp_path / "b.csv").write_text("video,frame\n")
    with pytest.raises(FormatError):
        D.read_annotations(tmp_path / "b.csv")
    (tmp_path / "c.csv").write_text("video_id,frame_index,person_tag,x,y,w,h\nv,0,p,1,2,x,4\n")
    with pytest.raises(FormatError):
        D.read_annotations(tmp_path / "c.csv")


def test_default_split():
    ids = [f"v{i:02d}" for i in range(18)]
    s = D.default_split(ids)
    assert len(s.train_videos) == 12 and len(s.test_videos) == 6
    assert s.validation_videos == ("v10", "v11")
    assert len(s.fit_videos) == 10
    with pytest.raises(ParameterError):
        D.default_split(ids, n_train=18)
    with pytest.raises(ParameterError):
        D.SplitSpec(["a"], ["a"])
    with pytest.raises(ParameterError):
        D.SplitSpec(["a"], ["b"], ["c"])


def test_synth_corpus_determinism():
    a, ra = D.synth_corpus(seed=5, n_videos=1, frames_per_video=2)
    b, rb = D.synth_corpus(seed=5, n_videos=1, frames_per_video=2)
    assert ra == rb
    for k in a:
        assert a[k].dtype == np.uint8 and a[k].shape == (480, 858)
        np.testing.assert_array_equal(a[k], b[k])
    c, _ = D.synth_corpus(seed=6, n_videos=1, frames_per_video=2)
    assert not np.array_equal(a[("v00", 0)], c[("v00", 0)])
    with pytest.raises(ParameterError):
        D.synth_corpus(n_videos=0)


def test_synth_rects_are_decimated_bounding_boxes():
    frames, rects = D.synth_corpus(seed=2, n_videos=1, frames_per_video=1)
    assert rects
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for r in rects:
            assert 0 <= r.x and r.x + r.w <= 429 and 0 <= r.y and r.y + r.h <= 240
