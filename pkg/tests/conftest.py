import pytest

from tinylift.engine.model import load_model
from tinylift.fixtures import write_fixtures


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("assets")
    write_fixtures(out, include_reference_models=False)
    return out


@pytest.fixture(scope="session")
def stub_person(fixture_dir):
    return load_model(fixture_dir / "stub-person.tmlf")


@pytest.fixture(scope="session")
def stub_kws(fixture_dir):
    return load_model(fixture_dir / "stub-kws.tmlf")
