"""Extended poses on SE_2(3): exp/log, composition, and invariant error.

Run with:  python3 demos/01_lie_basics.py
"""

import numpy as np

from nightrider.lie import (
    ExtendedPose,
    adjoint_se23,
    se23_exp,
    se23_hat,
    se23_log,
    se23_vee,
)


def main():
    rng = np.random.default_rng(7)
    np.set_printoptions(precision=4, suppress=True)

    print("== exp/log roundtrip ==")
    xi = np.array([0.2, -0.1, 0.3, 1.0, 0.0, -0.5, 4.0, 2.0, 0.1])
    pose = se23_exp(xi)
    print("xi           ", xi)
    print("log(exp(xi)) ", se23_log(pose))
    print("roundtrip err", np.abs(se23_log(pose) - xi).max())

    print("\n== group element ==")
    print("rotation:\n", pose.rot)
    print("velocity:", pose.vel, " position:", pose.pos)
    ident = pose.compose(pose.inverse())
    print("pose * pose^-1 deviation from identity:",
          np.abs(ident.as_matrix() - np.eye(5)).max())

    print("\n== adjoint: moving tangent vectors across the group ==")
    y = rng.normal(size=9)
    direct = adjoint_se23(pose) @ y
    conjugated = se23_vee(pose.as_matrix() @ se23_hat(y) @ pose.inverse().as_matrix())
    print("Ad_X y        ", direct[:3], "...")
    print("vee(X y^ X^-1)", conjugated[:3], "...")
    print("difference    ", np.abs(direct - conjugated).max())

    print("\n== right-invariant error ==")
    # estimate and truth that differ by a small left perturbation
    truth = se23_exp(rng.normal(size=9) * 0.5)
    err_vec = rng.normal(size=9) * 0.01
    estimate = se23_exp(err_vec).compose(truth)
    eta = estimate.compose(truth.inverse())
    print("planted error   ", err_vec)
    print("recovered error ", se23_log(eta))
    print("the error is independent of where the pair sits in the group:")
    shift = se23_exp(rng.normal(size=9))
    eta2 = estimate.compose(shift).compose(truth.compose(shift).inverse())
    print("after a common right shift:", np.abs(se23_log(eta2) - se23_log(eta)).max())


if __name__ == "__main__":
    main()
