import pytest

from spectropitch.synth import DatasetConfig, build_dataset, load_manifest

SMALL_DATASET = dict(counts={"train": 10, "val": 4, "test": 4}, duration_s=2.048,
                     snr_db=[6.0, 20.0], seed=3)


@pytest.fixture(scope="session")
def small_manifest_path(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_ds")
    build_dataset(DatasetConfig(**SMALL_DATASET), out)
    return out / "manifest.json"


@pytest.fixture(scope="session")
def small_manifest(small_manifest_path):
    return load_manifest(small_manifest_path)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
