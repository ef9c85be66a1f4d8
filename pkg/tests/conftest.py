import subprocess
import sys
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory) -> Path:
    """Small synthetic GSCv2-layout corpus shared by the suite."""
    root = tmp_path_factory.mktemp("corpus")
    subprocess.run(
        [sys.executable, str(SCRIPTS / "make_synthetic_corpus.py"), str(root),
         "--utterances", "200", "--speakers", "40",
         "--background-minutes", "3", "--seed", "7"],
        check=True, capture_output=True)
    return root


@pytest.fixture(scope="session")
def full_corpus_root(tmp_path_factory) -> Path:
    """Full-size synthetic corpus (script defaults) for headline runs."""
    root = tmp_path_factory.mktemp("full_corpus")
    subprocess.run(
        [sys.executable, str(SCRIPTS / "make_synthetic_corpus.py"), str(root)],
        check=True, capture_output=True)
    return root


@pytest.fixture(scope="session")
def catalog(corpus_root):
    from arbsim.audio import ingest_gscv2

    return ingest_gscv2(corpus_root)
