import re
import subprocess
import sys

import pytest

from liftforge.synth import write_corpus


def engine_cli(*args: str) -> str:
    """Run the deployed engine's CLI (the external interface we export to)."""
    proc = subprocess.run([sys.executable, "-m", "tinylift.cli", *args],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc.stdout


def engine_scores(*args: str) -> list[int]:
    return [int(m.group(1)) for m in re.finditer(r"score=\s*(-?\d+)", engine_cli(*args))]


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Small stand-in corpus shared by the unit-scale tests."""
    out = tmp_path_factory.mktemp("corpus")
    write_corpus(out, keywords_per_class=80, images_per_class=250, seed=11)
    return out
