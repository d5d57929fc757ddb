"""Library API walk-through: fit one smile two ways and compare the surfaces.

Trains a penalty-constrained network and a plain least-squares twin on the
same synthetic quotes, scores both in premium and implied-vol space, and
writes training-curve and risk-profile plots.  Pass an epoch count to shrink
the run (the shipped default is 10000):

    python3 demos/library_tour.py 2000
"""

import dataclasses
import sys
from pathlib import Path

from dcsurf import (
    PenaltyConfig,
    SabrParams,
    TrainConfig,
    eval_metrics,
    history_svg,
    penalty_mesh,
    profile_svg,
    risk_profiles,
    synth_in_sample,
    synth_out_sample,
    train,
)


def main() -> None:
    epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 10000
    out = Path("demo-run-lib")
    out.mkdir(parents=True, exist_ok=True)

    smile = SabrParams(alpha=0.2, beta=1.0, rho=-0.4, nu=0.6, f=1.0, r=0.04)
    quotes = synth_in_sample(smile)
    truth = synth_out_sample(smile)
    mesh = penalty_mesh()

    penalized = TrainConfig(epochs=epochs)
    plain = dataclasses.replace(
        penalized, penalty=PenaltyConfig(m_k=0.0, m_kk=0.0, m_tau=0.0)
    )

    print(f"training {epochs} epochs per model on {quotes.points.shape[0]} quotes")
    reports = {}
    for tag, cfg in (("dcnn", penalized), ("mlp", plain)):
        rep = train(quotes, mesh, cfg, rate=smile.r)
        reports[tag] = rep
        history_svg(rep.history_epochs, rep.history, out / f"history_{tag}.svg")
        print(f"  {tag}: final e_mse={rep.history[-1].e_mse:.3e} in {rep.seconds:.1f}s")

    # score both with the same penalty magnitudes so the columns compare
    scoring = penalized.penalty
    print(f"\n{'model':6s} {'sample':6s} {'e_mse':>10s} {'e_penalty':>10s} {'e_mse_sigma':>12s}")
    for tag, rep in reports.items():
        for sample, grid in (("in", quotes), ("out", truth)):
            row = eval_metrics(
                rep.params, grid, mesh, scoring,
                sample=sample, model_tag=tag, rate=smile.r,
            )
            sigma = "-" if row.e_mse_sigma is None else f"{row.e_mse_sigma:.4e}"
            print(f"{tag:6s} {sample:6s} {row.e_mse:10.3e} {row.e_penalty:10.3e} {sigma:>12s}")

    for tag, rep in reports.items():
        profile_svg(risk_profiles(rep.params), out / f"profiles_{tag}.svg")
    print(f"\nplots written under {out}/")


if __name__ == "__main__":
    main()
