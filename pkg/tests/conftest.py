import pytest

from pipeclean.inject import ErrorProfile, inject
from pipeclean.synth import make_blobs_table
from pipeclean.table import save_table


@pytest.fixture(scope="session")
def artifact_dir(tmp_path_factory):
    """A small injected-artifact corpus shared by CLI/experiment tests:
    two synthetic datasets with the profiles the runners look for."""
    root = tmp_path_factory.mktemp("artifacts")
    specs = {
        "synthA": make_blobs_table(60, 3, 2, seed=21, skew=1.0, separation=4.0),
        "synthB": make_blobs_table(70, 4, 2, seed=22, separation=4.0),
    }
    profiles = [("mcar", r) for r in (0, 5, 10, 15, 20, 30)]
    profiles += [("mar", 15), ("out", 10), ("dup", 10)]
    for name, base in specs.items():
        save_table(base, str(root / f"{name}.csv"))
        for kind, rate in profiles:
            profile = ErrorProfile(kind=kind, rate=rate / 100, seed=42)
            out = inject(base, profile)
            save_table(out, str(root / (profile.artifact_stem(name) + ".csv")))
    return str(root)
