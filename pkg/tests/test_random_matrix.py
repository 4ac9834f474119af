import numpy as np
import pytest
from scipy.stats import unitary_group

from freebe.freeconv import free_convolve, kfunction_from_measure, measure_from_k
from freebe.measures import atomic_measure, cdf

pytestmark = pytest.mark.slow

DIM, TRIALS = 512, 40


def _diag(atoms, dim):
    counts = np.round(np.array([w for _, w in atoms]) * dim).astype(int)
    counts[-1] = dim - counts[:-1].sum()
    return np.repeat([x for x, _ in atoms], counts)


@pytest.mark.parametrize("a_atoms, b_atoms", [
    ([(-1.0, 0.5), (1.0, 0.5)], [(-1.0, 0.5), (1.0, 0.5)]),
    ([(0.0, 0.25), (2.0, 0.75)], [(-1.0, 0.5), (1.0, 0.5)]),
])
def test_eigenvalues_follow_free_convolution(a_atoms, b_atoms):
    k = free_convolve(kfunction_from_measure(atomic_measure(a_atoms)),
                      kfunction_from_measure(atomic_measure(b_atoms)))
    F = cdf(measure_from_k(k))

    a = np.diag(_diag(a_atoms, DIM)).astype(complex)
    b = _diag(b_atoms, DIM)
    haar = unitary_group(DIM, seed=2024)
    eig = []
    for _ in range(TRIALS):
        u = haar.rvs()
        eig.append(np.linalg.eigvalsh(a + (u * b) @ u.conj().T))
    eig = np.sort(np.concatenate(eig))

    # fine mesh offset from the atoms, where eigenvalues carry rounding noise
    x = np.linspace(eig[0] - 0.1, eig[-1] + 0.1, 4001) + 1e-4 * np.pi
    emp = np.searchsorted(eig, x, side="right") / eig.size
    assert np.max(np.abs(emp - F(x))) < 0.05
