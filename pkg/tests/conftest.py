from pathlib import Path

import pytest

from soapbound.frontend import load_program, parse_program

KERNELS = Path(__file__).resolve().parent.parent / "src" / "soapbound" / "kernels"


def kernel(name: str):
    return load_program(KERNELS / f"{name}.soap")


def kernel_path(name: str) -> Path:
    return KERNELS / f"{name}.soap"


# two statements: C <- A, B and E <- C, D, E (E updated in place)
FUSION_PAIR = """\
params: N, S
for i in range(N):
    for j in range(N):
        for k in range(N):
            C[i, j, k] = f(A[i, k], B[k, j])
for i in range(N):
    for j in range(N):
        for k in range(N):
            E[i, j] += C[i, k, j] * D[k, j]
"""


@pytest.fixture
def fusion_pair():
    return parse_program(FUSION_PAIR, "fusion_pair")
