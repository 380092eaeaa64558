import contextlib
from pathlib import Path
from types import SimpleNamespace

import pytest
from hypothesis import settings

from commsent import pipeline, synthetic

settings.register_profile("suite", max_examples=50, deadline=None)
settings.load_profile("suite")

# (number, description, passed) tuples collected by the acceptance tests.
_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, ok in sorted(_ACCEPTANCE):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} [{verdict}] {desc}")


@contextlib.contextmanager
def _criterion_cm(num, desc):
    try:
        yield
    except BaseException:
        _ACCEPTANCE.append((num, desc, False))
        print(f"criterion {num:2d} [FAIL] {desc}")
        raise
    _ACCEPTANCE.append((num, desc, True))
    print(f"criterion {num:2d} [PASS] {desc}")


@pytest.fixture
def criterion():
    """Context manager recording one pass/fail line per acceptance criterion."""
    return _criterion_cm


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A scaled-down synthetic corpus (~45k tokens) shared across tests."""
    root = Path(tmp_path_factory.mktemp("synth-small"))
    meta = synthetic.generate(root, scale=0.04)
    return SimpleNamespace(root=root, config=root / "config.yaml", meta=meta)


@pytest.fixture(scope="session")
def small_run(small_corpus):
    """One full pipeline run over the small corpus, reused read-only."""
    cfg = pipeline.validate_config(
        small_corpus.config, out_dir=str(small_corpus.root / "out")
    )
    pipeline.run_all(cfg)
    return SimpleNamespace(cfg=cfg, out=Path(cfg.out_dir), corpus=small_corpus)
