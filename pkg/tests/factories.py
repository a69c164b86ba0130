"""Random configurations shared by the test modules."""
import numpy as np

from wvalab import fock
from wvalab.metrology import SnrConfig
from wvalab.protocol import SystemObservable, SystemState, sigma_z

POINTER_DIM = 192


def random_state(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return SystemState(v / np.linalg.norm(v))


def random_observable(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return SystemObservable((m + m.conj().T) / 2)


def random_pointer(rng, dim=POINTER_DIM, r_max=1.0, alpha_max=1.5):
    r = rng.uniform(0, r_max)
    theta = rng.uniform(-np.pi, np.pi)
    alpha = rng.uniform(0, alpha_max) * np.exp(1j * rng.uniform(-np.pi, np.pi))
    return fock.squeezed_coherent_state(r * np.exp(1j * theta), alpha, dim)


def random_post(rng, pre, min_overlap=0.3):
    while True:
        post = random_state(rng, pre.dim)
        if abs(np.vdot(post.amplitudes, pre.amplitudes)) >= min_overlap:
            return post


def random_snr_config(rng, d=None, g=1e-5, qubit=False, dim=POINTER_DIM, min_mean=0.1):
    """Non-degenerate (Var(A) > 0, |<A>| >= min_mean) configuration."""
    q, p = fock.quadrature_ops(dim)
    while True:
        if qubit:
            A = sigma_z()
            pre = random_state(rng, 2)
        else:
            d = d or int(rng.integers(2, 5))
            A = random_observable(rng, d)
            pre = random_state(rng, d)
        if abs(A.mean(pre)) >= min_mean and A.variance(pre) > 1e-3:
            break
    return SnrConfig(g=g, N=1, pre=pre, A=A, pointer=random_pointer(rng, dim), omega=q, readout=p)


def plus_config(pointer, g=1e-5):
    from wvalab.protocol import plus_state

    q, p = fock.quadrature_ops(pointer.dim)
    return SnrConfig(g=g, N=1, pre=plus_state(), A=sigma_z(), pointer=pointer, omega=q, readout=p)
