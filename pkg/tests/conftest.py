import numpy as np
import pytest

from mbpetc import certificates
from mbpetc.dynamics import LevelSetSpec, SystemModel, _linear_gamma, pendulum_model


@pytest.fixture(scope="session")
def pend_constants():
    """Certified pendulum constants at a coarse grid (fast, used by most tests)."""
    model = pendulum_model(gamma_rate=1.0)
    return certificates.certify(model, LevelSetSpec(0.258), 0.35, grid_resolution=40)


@pytest.fixture(scope="session")
def pend_model(pend_constants):
    return pendulum_model(gamma_rate=pend_constants.gamma_rate)


class _DecoupledField:
    """x' = diag(-1, -2) x, input ignored (B = 0)."""

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        return np.stack([-x[..., 0], -2.0 * x[..., 1]], axis=-1)


class _ZeroFeedback:
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (1,))


class _SquaredNorm:
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1)


class _SquaredNormGrad:
    def __call__(self, x):
        return 2.0 * np.asarray(x, dtype=float)


def make_linear_model(gamma_rate=2.0) -> SystemModel:
    """Decoupled stable linear plant with v = ||x||^2; everything analytic."""
    return SystemModel(
        name="linear2",
        state_dim=2,
        input_dim=1,
        f=_DecoupledField(),
        kappa=_ZeroFeedback(),
        v=_SquaredNorm(),
        v_grad=_SquaredNormGrad(),
        gamma=_linear_gamma(gamma_rate),
        gamma_rate=gamma_rate,
    )


def make_constants(model_name, c, sigma, L1, L2, M, rate, grid=8):
    """Assemble a consistent certificate from hand-picked constants."""
    mu = certificates.mu_from_lipschitz(L1, L2)
    h, active = certificates.sigma_masp(sigma, mu, M, L1)
    return certificates.CertifiedConstants(
        model=model_name,
        c=c,
        sigma=sigma,
        L1c=L1,
        L2c=L2,
        mu_c=mu,
        M_max_c=M,
        gamma_rate=rate,
        h_sigma_masp=h,
        grid_resolution=grid,
        active_term=active,
    )
