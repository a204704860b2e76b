import numpy as np
import pytest

from amfm_faces import dataset as D
from amfm_faces.gabor import build_bank
from amfm_faces.hilbert import design_hilbert_fir


@pytest.fixture(scope="session")
def hilbert_filter():
    return design_hilbert_fir()


@pytest.fixture(scope="session")
def bank():
    return build_bank()


@pytest.fixture(scope="session")
def tiny_corpus():
    """Two videos with two frames each: 4 frames, 180 blocks."""
    return D.synth_corpus(seed=3, n_videos=2, frames_per_video=2)


@pytest.fixture(scope="session")
def tiny_fm_dataset(tiny_corpus, hilbert_filter, bank):
    frames, rects = tiny_corpus
    return D.build_dataset(frames, rects, "fm", hilbert_filter, bank)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> (passed, detail); printed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
