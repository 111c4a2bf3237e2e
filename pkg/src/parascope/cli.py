"""Command-line pipeline driver.

Subcommands compose module operations; nothing computational lives only
here.  Exit codes: 0 success, 1 validation/usage, 2 runtime failure.
A ``--config file.json`` on any subcommand merges JSON values over the
parsed flags (config wins).
"""

import argparse
import json
import sys

import numpy as np

from . import binning, diagnostics, features, siren, synth
from .ensemble import load_manifest
from .errors import (
    ConfigError,
    FormatError,
    NotFound,
    ParascopeError,
    RangeError,
    ShapeError,
    ValidationError,
)
from .hmc import HmcConfig, run_chains
from .prior import build_prior, load_prior, save_prior
from .siren import TrainConfig, init_model, load_model, save_model, train

VALIDATION_ERRORS = (ValidationError, ConfigError, FormatError, RangeError, ShapeError, NotFound)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _hmc_flags(p: argparse.ArgumentParser):
    p.add_argument("--chains", type=int, default=1000)
    p.add_argument("--leapfrog-steps", type=int, default=10)
    p.add_argument("--burn-in", type=int, default=50)
    p.add_argument("--post-steps", type=int, default=100)
    p.add_argument("--emit-every", type=int, default=5)
    p.add_argument("--step-size", type=float, default=0.01)


def _hmc_config(args, seed=None) -> HmcConfig:
    return HmcConfig(
        n_chains=args.chains,
        leapfrog_steps=args.leapfrog_steps,
        burn_in=args.burn_in,
        post_steps=args.post_steps,
        emit_every=args.emit_every,
        step_size=args.step_size,
        seed=args.seed if seed is None else seed,
    )


def _load_feature(path: str) -> features.FeatureSpec:
    with open(path) as fh:
        doc = json.load(fh)
    spec = features.FeatureSpec.from_dict(doc)
    return spec


# ------------------------------------------------------------ subcommands


def cmd_gen(args) -> int:
    cfg = synth.default_config(args.family, seed=args.seed, resolution=args.resolution)
    train_ds, test_ds = synth.generate_ensemble(
        cfg, args.train, args.test, f"{args.out}/train", f"{args.out}/test"
    )
    print(f"wrote {train_ds.count} train and {test_ds.count} test members to {args.out}")
    return 0


def cmd_train(args) -> int:
    dataset = load_manifest(args.data)
    model = init_model(
        dataset.space,
        dataset.domain,
        widths=args.widths,
        seed=args.seed,
        coord_scale=args.coord_scale,
        param_scale=args.param_scale,
    )
    cfg = TrainConfig(
        steps=args.steps, batch_size=args.batch, base_lr=args.lr, seed=args.seed
    )
    model, trace = train(model, dataset, cfg)
    save_model(model, args.out)
    print(f"final loss {trace[-1][1]:.3e} after {trace[-1][0] + 1} steps -> {args.out}")
    return 0


def cmd_fim(args) -> int:
    model = load_model(args.model)
    dataset = load_manifest(args.data)
    prior = build_prior(model, dataset, m_samples=args.samples, seed=args.seed)
    save_prior(prior, args.out)
    print(
        f"prior over {len(prior.entries)} configurations, "
        f"sigma_s={prior.sigma_s:.4f} sigma_f={prior.sigma_f:.4f} -> {args.out}"
    )
    return 0


def _write_samples_csv(path, samples):
    header = ["chain", "step"] + [f"z{i}" for i in range(samples.dim)] + ["log_post"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for c, s, z, lp in zip(
            samples.chain_id, samples.step_index, samples.z, samples.log_posterior
        ):
            row = [str(int(c)), str(int(s))] + [repr(float(v)) for v in z] + [repr(float(lp))]
            fh.write(",".join(row) + "\n")


def cmd_sample(args) -> int:
    import os

    model = load_model(args.model)
    prior = load_prior(args.fim)
    spec = _load_feature(args.feature)
    spec.validate(dim=model.space.dim)
    out = run_chains(_hmc_config(args), prior, model, spec)
    os.makedirs(args.out, exist_ok=True)
    _write_samples_csv(f"{args.out}/samples.csv", out)
    grids = binning.marginal_matrix(out, model.space, args.resolution)
    with open(f"{args.out}/heatmaps.json", "w") as fh:
        json.dump(
            {
                "count": out.count,
                "accept_rate": out.accept_rate,
                "label": spec.label,
                "grids": [g.to_wire() for g in grids],
            },
            fh,
        )
    print(f"{out.count} samples, accept rate {out.accept_rate:.3f} -> {args.out}")
    return 0


def cmd_diag_psnr(args) -> int:
    model = load_model(args.model)
    dataset = load_manifest(args.data)
    psnrs, rmses = diagnostics.held_out_metrics(model, dataset)
    counts, edges = np.histogram(psnrs[np.isfinite(psnrs)], bins=args.bins)
    payload = {
        "kind": "psnr-hist",
        "mean_psnr": float(np.mean(psnrs[np.isfinite(psnrs)])),
        "min_psnr": float(np.min(psnrs)),
        "mean_rmse": float(np.mean(rmses)),
        "bin_edges": edges.tolist(),
        "counts": counts.tolist(),
    }
    rows = [
        {"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "count": int(c)}
        for i, c in enumerate(counts)
    ]
    diagnostics.write_report(args.out, payload, rows)
    print(f"mean held-out PSNR {payload['mean_psnr']:.2f} dB -> {args.out}.json")
    return 0


def _scorer_by_name(name, model, dataset, prior):
    if name == "fim-kde":
        return diagnostics.fim_kde_scorer(prior)
    if name == "kde":
        return diagnostics.param_kde_scorer(prior)
    if name == "oracle":
        return diagnostics.oracle_scorer(model, dataset)
    raise ConfigError(f"unknown scorer {name!r}")


def cmd_diag_sparsify(args) -> int:
    model = load_model(args.model)
    dataset = load_manifest(args.data)
    prior = load_prior(args.fim) if args.fim else None
    if args.scorer in ("fim-kde", "kde") and prior is None:
        raise ConfigError(f"scorer {args.scorer!r} needs --fim")
    scorer = _scorer_by_name(args.scorer, model, dataset, prior)
    fractions = tuple(float(f) for f in args.fractions.split(","))
    curve = diagnostics.sparsification(
        scorer, dataset, model, fractions=fractions, scorer_name=args.scorer
    )
    rows = [
        {"fraction": f, "mean_psnr": p, "mean_rmse": r}
        for f, p, r in zip(curve.fractions, curve.mean_psnr, curve.mean_rmse)
    ]
    diagnostics.write_report(args.out, curve.to_dict(), rows)
    print(f"{args.scorer}: PSNR {curve.mean_psnr[0]:.2f} -> {curve.mean_psnr[-1]:.2f} dB")
    return 0


def cmd_diag_rhat(args) -> int:
    model = load_model(args.model)
    prior = load_prior(args.fim)
    dataset = load_manifest(args.data)
    report = diagnostics.rhat_report(
        model, prior, dataset, _hmc_config(args), n_features=args.features, seed=args.seed
    )
    rows = [
        {"bin_lo": float(report.bin_edges[i]), "bin_hi": float(report.bin_edges[i + 1]), "count": int(c)}
        for i, c in enumerate(report.counts)
    ]
    diagnostics.write_report(args.out, report.to_dict(), rows)
    print(
        f"{report.values.size} R-hat values, "
        f"{100 * report.fraction_below(1.1):.1f}% below 1.1 -> {args.out}.json"
    )
    return 0


def cmd_diag_mmd(args) -> int:
    model = load_model(args.model)
    prior = load_prior(args.fim)
    spec = _load_feature(args.feature)
    spec.validate(dim=model.space.dim)
    base = _hmc_config(args)
    seeds = np.random.SeedSequence(args.seed).generate_state(len(_ints(args.steps)) + 1)
    from dataclasses import replace

    ref_cfg = replace(base, post_steps=args.reference_steps, seed=int(seeds[0]))
    reference = run_chains(ref_cfg, prior, model, spec)
    rows = []
    for i, steps in enumerate(_ints(args.steps)):
        cfg = replace(base, post_steps=steps, seed=int(seeds[i + 1]))
        out = run_chains(cfg, prior, model, spec)
        rows.append({"post_steps": steps, "mmd": diagnostics.mmd(out.z, reference.z)})
    payload = {"kind": "mmd", "reference_steps": args.reference_steps, "points": rows}
    diagnostics.write_report(args.out, payload, rows)
    print(" ".join(f"{r['post_steps']}:{r['mmd']:.4f}" for r in rows))
    return 0


def cmd_diag_nll(args) -> int:
    model = load_model(args.model)
    prior = load_prior(args.fim)
    dataset = load_manifest(args.data)
    spec = _load_feature(args.feature)
    spec.validate(dim=model.space.dim)
    out = run_chains(_hmc_config(args), prior, model, spec)
    scale = diagnostics.mean_vector_norm(dataset)
    values, counts, edges = diagnostics.nll_distribution(
        out, model, spec, norm_scale=scale, seed=args.seed, max_samples=args.max_samples
    )
    rng = np.random.default_rng(args.seed)
    z_uniform = rng.uniform(
        model.space.lower, model.space.upper, size=(values.size, model.space.dim)
    )
    baseline, _, _ = diagnostics.nll_distribution(
        z_uniform, model, spec, norm_scale=scale, seed=args.seed
    )
    payload = {
        "kind": "nll",
        "median": float(np.median(values)),
        "baseline_median": float(np.median(baseline)),
        "norm_scale": scale,
        "bin_edges": edges.tolist(),
        "counts": counts.tolist(),
    }
    rows = [
        {"bin_lo": float(edges[i]), "bin_hi": float(edges[i + 1]), "count": int(c)}
        for i, c in enumerate(counts)
    ]
    diagnostics.write_report(args.out, payload, rows)
    print(
        f"median normalized NLL {payload['median']:.4f} "
        f"(uniform baseline {payload['baseline_median']:.4f})"
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    model = load_model(args.model)
    prior = load_prior(args.fim)
    app = create_app(model, prior, _hmc_config(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ----------------------------------------------------------------- parser


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="parascope")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, func):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", type=str, default=None, help="JSON overriding flags")
        p.set_defaults(func=func)

    p = sub.add_parser("gen", help="generate an analytic ensemble")
    p.add_argument("--family", required=True, choices=synth.FAMILIES)
    p.add_argument("--train", type=int, default=60)
    p.add_argument("--test", type=int, default=40)
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=_ints, default=None)
    common(p, cmd_gen)

    p = sub.add_parser("train", help="train a surrogate on an ensemble")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--batch", type=int, default=4096)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--widths", type=_ints, default=(128, 128, 128, 128))
    p.add_argument("--coord-scale", type=float, default=siren.DEFAULT_COORD_SCALE)
    p.add_argument("--param-scale", type=float, default=siren.DEFAULT_PARAM_SCALE)
    common(p, cmd_train)

    p = sub.add_parser("fim", help="precompute curvature matrices and bandwidths")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=32768)
    common(p, cmd_fim)

    p = sub.add_parser("sample", help="headless posterior sampling")
    p.add_argument("--model", required=True)
    p.add_argument("--fim", required=True)
    p.add_argument("--feature", required=True, help="FeatureSpec JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", type=int, default=32)
    _hmc_flags(p)
    common(p, cmd_sample)

    d = sub.add_parser("diagnose", help="evaluation reports")
    dsub = d.add_subparsers(dest="diagnostic", required=True)

    p = dsub.add_parser("psnr-hist")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=20)
    common(p, cmd_diag_psnr)

    p = dsub.add_parser("sparsify")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fim", default=None)
    p.add_argument("--scorer", default="fim-kde", choices=("fim-kde", "kde", "oracle"))
    p.add_argument("--fractions", default="0.0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8")
    p.add_argument("--out", required=True)
    common(p, cmd_diag_sparsify)

    p = dsub.add_parser("rhat")
    p.add_argument("--model", required=True)
    p.add_argument("--fim", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--features", type=int, default=6)
    p.add_argument("--out", required=True)
    _hmc_flags(p)
    common(p, cmd_diag_rhat)

    p = dsub.add_parser("mmd")
    p.add_argument("--model", required=True)
    p.add_argument("--fim", required=True)
    p.add_argument("--feature", required=True)
    p.add_argument("--steps", default="25,100")
    p.add_argument("--reference-steps", type=int, default=400)
    p.add_argument("--out", required=True)
    _hmc_flags(p)
    common(p, cmd_diag_mmd)

    p = dsub.add_parser("nll")
    p.add_argument("--model", required=True)
    p.add_argument("--fim", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--feature", required=True)
    p.add_argument("--max-samples", type=int, default=2048)
    p.add_argument("--out", required=True)
    _hmc_flags(p)
    common(p, cmd_diag_nll)

    p = sub.add_parser("serve", help="launch the HTTP/WebSocket service")
    p.add_argument("--model", required=True)
    p.add_argument("--fim", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    _hmc_flags(p)
    common(p, cmd_serve)

    return top


def _apply_config(args):
    if getattr(args, "config", None):
        with open(args.config) as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise ConfigError("--config must hold a JSON object")
        for key, value in overrides.items():
            setattr(args, key.replace("-", "_"), value)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return 0 if exc.code == 0 else 1
    try:
        _apply_config(args)
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ParascopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
