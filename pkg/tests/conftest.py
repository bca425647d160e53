import sys
from importlib import resources
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "scripts" / "oracles"))



@pytest.fixture(scope="session")
def minibench_dir() -> Path:
    return Path(str(resources.files("mednorm.data").joinpath("minibench")))


@pytest.fixture(scope="session")
def minibench_kb(minibench_dir):
    from mednorm.config import load_config
    from mednorm.kb import build_kb

    return build_kb(load_config(minibench_dir / "minibench.yaml").kb_config())


@pytest.fixture(scope="session")
def minibench_dataset(minibench_dir):
    from mednorm.datamodel import load_dataset

    return load_dataset(minibench_dir / "dataset.json")


ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record ``(criterion, part, ok, detail)``; summarized after the run."""
    def record(criterion: int, part: str, ok: bool, detail: str = "") -> bool:
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{p}: {'ok' if ok else 'FAILED'}{' (' + d + ')' if d else ''}" for p, ok, d in parts)
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {detail}")
