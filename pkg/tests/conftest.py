import numpy as np
import pytest

from dynsamp import DiffusionModel, TimeGrid, build_dictionary, build_laplacian, eigendecompose, gen_path

ACCEPTANCE_LINES: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def path2():
    """Two nodes, one edge, heat step ln(2)/2 so the diffusion eigenvalues are (1, 1/2)."""
    basis = eigendecompose(build_laplacian(gen_path(2)))
    model = DiffusionModel.heat(np.log(2) / 2)
    dictionary = build_dictionary(basis, model, 2, TimeGrid.regular(2))
    return basis, model, dictionary
