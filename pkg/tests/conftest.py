import numpy as np
import pytest
from hypothesis import strategies as st

from rbsde import BarrierSpec, DiscretePath, eval_barriers, make_uniform_grid

BARRIER_KINDS = {
    "constant": (BarrierSpec("constant", (-0.3,)), BarrierSpec("constant", (0.3,))),
    "affine": (BarrierSpec("affine", (-0.5, 0.3)), BarrierSpec("affine", (0.2, 0.5))),
    "sinusoid": (BarrierSpec("sinusoid", (-0.3, 0.2, 7.0)), BarrierSpec("sinusoid", (0.3, 0.1, 3.0))),
}


@pytest.fixture(params=sorted(BARRIER_KINDS))
def barrier_kind(request):
    return request.param


def barriers_on(kind, grid):
    lo, hi = BARRIER_KINDS[kind]
    return eval_barriers(lo, hi, grid)


@st.composite
def path_and_barriers(draw, max_n=12, interior_start=False):
    """A short grid path together with a barrier pair of any kind."""
    n = draw(st.integers(1, max_n))
    kind = draw(st.sampled_from(sorted(BARRIER_KINDS)))
    grid = make_uniform_grid(1.0, n)
    b = barriers_on(kind, grid)
    lo0, hi0 = b.lower.values[0], b.upper.values[0]
    if interior_start:
        x0 = draw(st.floats(0.0, 1.0).map(lambda u: lo0 + (0.05 + 0.9 * u) * (hi0 - lo0)))
    else:
        x0 = draw(st.floats(0.0, 1.0).map(lambda u: lo0 + u * (hi0 - lo0)))
    steps = draw(st.lists(st.floats(-0.6, 0.6), min_size=n, max_size=n))
    x = np.concatenate([[x0], x0 + np.cumsum(steps)])
    return DiscretePath(grid, x), b
