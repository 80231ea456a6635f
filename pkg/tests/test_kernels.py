import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from empnca import kernels
from empnca.nca import N_PARAMS, Genome, new_seed_grid

from conftest import make_genome

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled core not built")


def _run(kernel, genome, M, N, overwrite, synchronous, grid=None):
    grid = grid or new_seed_grid(M)
    return kernel(genome.weights, genome.bias, grid.alive.astype(np.uint8), grid.signal,
                  N, overwrite, synchronous)


@compiled
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), M=st.integers(3, 12), N=st.integers(1, 15),
       overwrite=st.booleans(), synchronous=st.booleans())
def test_compiled_and_python_backends_are_bit_identical(seed, M, N, overwrite, synchronous):
    genome = make_genome(seed)
    fast = _run(kernels.rollout_kernel, genome, M, N, overwrite, synchronous)
    slow = _run(kernels.python_rollout_kernel, genome, M, N, overwrite, synchronous)
    for a, b in zip(fast, slow):
        assert a.dtype == b.dtype
        assert a.tobytes() == b.tobytes()


@compiled
@settings(max_examples=30, deadline=None)
@given(params=st.lists(st.sampled_from([-1.0, -0.5, 0.0, 0.5, 1.0]), min_size=N_PARAMS, max_size=N_PARAMS))
def test_backends_agree_on_boundary_weights(params):
    # exact zeros and saturated weights stress the z > 0 threshold
    genome = Genome.from_parameters(np.array(params))
    fast = _run(kernels.rollout_kernel, genome, 9, 10, True, False)
    slow = _run(kernels.python_rollout_kernel, genome, 9, 10, True, False)
    for a, b in zip(fast, slow):
        assert a.tobytes() == b.tobytes()


def test_kernel_output_shapes_and_sentinels():
    alive, signal, actions, sensors = _run(kernels.rollout_kernel, Genome.zeros(), 5, 4, True, False)
    assert alive.shape == signal.shape == (5, 5, 5)
    assert actions.shape == sensors.shape == (4, 5, 5)
    assert (actions == -1).sum() == 4 * 24
    assert np.all(actions[:, 2, 2] == 128)
