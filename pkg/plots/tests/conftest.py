import shutil
import subprocess
from pathlib import Path

import pytest

REPO_SCENARIO = Path(__file__).resolve().parents[2] / "scenarios" / "desk_scale.yaml"


@pytest.fixture(scope="session")
def sweep_out_dir(tmp_path_factory) -> Path:
    """Sweep artifacts produced by the coexsim CLI — the producer is exercised
    only through its public command-line interface."""
    exe = shutil.which("coexsim")
    if exe is None:
        pytest.skip("coexsim CLI not on PATH; install the simulator package "
                    "to run the integration fixtures")
    if not REPO_SCENARIO.exists():
        pytest.skip("desk-scale scenario file not present")
    work = tmp_path_factory.mktemp("sweep")
    scenario = work / "scenario.yaml"
    scenario.write_text(REPO_SCENARIO.read_text())
    out = work / "out"
    subprocess.run([exe, "sweep", str(scenario), "--seed", "1",
                    "--trials", "300", "--sigma-points", "7",
                    "--out-dir", str(out)],
                   check=True, capture_output=True, text=True)
    return out


@pytest.fixture(scope="session")
def sweep_csv(sweep_out_dir) -> Path:
    return sweep_out_dir / "tradeoff.csv"
