"""Online prediction of a partially observed system, two ways.

First a Kalman filter with the true model predicts a noisy scalar system
and approaches the steady-state error floor.  Then spectral filtering
predicts the output of a symmetric system *without knowing its matrices*:
the padded input history is projected onto the top eigenvectors of a
fixed Gram matrix, and online gradient descent learns the projection
weights.  The eigenvalues of that matrix decay geometrically, which is
why a handful of filters suffices.

Run:
    python3 demos/predict_with_spectral_filters.py
"""

import numpy as np

from nscontrol import (
    KalmanState,
    OnlineSpectralFilter,
    SpectralPredictor,
    kalman_steady_state,
    kalman_step,
    spectral_basis,
)


def main() -> None:
    print("=== Kalman filter with the true model ===")
    a, T = 0.9, 2000
    rng = np.random.default_rng(0)
    one = np.eye(1)
    A = np.array([[a]])
    x = 0.0
    state = KalmanState(x_hat=np.zeros(1), Sigma=one)
    errors = []
    for t in range(T):
        x_next = a * x + float(rng.normal())
        y = x + float(rng.normal())
        state = kalman_step(state, A, None, one, one, one, y=np.array([y]))
        errors.append((state.x_hat[0] - x_next) ** 2)
        x = x_next
    Sigma, gain = kalman_steady_state(A, one, one, one)
    print(f"  steady-state predictive covariance: {Sigma[0, 0]:.6f}")
    print(f"  steady-state gain: {gain[0, 0]:.6f}")
    print(f"  empirical mean squared prediction error: {np.mean(errors):.4f}")

    print("\n=== spectral filtering without the model ===")
    T = 3000
    basis = spectral_basis(T, h=25)
    top = basis.eigenvalues
    print(f"  Gram-matrix eigenvalue decay: sigma_1={top[0]:.3e}, "
          f"sigma_5={top[4]:.3e}, sigma_15={top[14]:.3e}")

    predictor = SpectralPredictor.zeros(basis, d_y=1, d_u=1, kappa=10.0, step_scale=0.1)
    filt = OnlineSpectralFilter(predictor, d_u=1)
    us = rng.uniform(-1.0, 1.0, size=T)
    x = 0.0
    for t in range(T):
        x_next = 0.8 * x + us[t]
        filt.step(np.array([us[t]]), np.array([x_next]))
        x = x_next
    losses = np.array(filt.losses)
    quarter = len(losses) // 4
    for name, chunk in (
        ("first quarter", losses[:quarter]),
        ("last quarter", losses[-quarter:]),
    ):
        print(f"  average squared prediction error, {name}: {chunk.mean():.2e}")


if __name__ == "__main__":
    main()
