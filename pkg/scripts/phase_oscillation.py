"""Ground-state population after excite / address / de-excite for two
addressing powers, plus the fitted frequency versus light shift.

Power is converted to light shift with a calibration kappa in MHz per mW.
The default maps 1.5 mW to 10 MHz.
"""

import argparse
from pathlib import Path

from rydsim.experiments import experiment_phase_oscillation
from rydsim.ryx import parse_file

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=CONFIGS / "phase.ryx")
    ap.add_argument("--powers", default="1.5,3.5", help="comma-separated powers in mW")
    ap.add_argument("--kappa", type=float, default=10.0 / 1.5)
    ap.add_argument("--sampled", action="store_true")
    ap.add_argument("--temperature", type=float, help="override noise.temperature_uk")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default=".")
    args = ap.parse_args()

    doc = parse_file(args.config)
    if args.temperature is not None:
        doc = doc.with_value("noise.temperature_uk", args.temperature)
    powers = [float(p) for p in args.powers.split(",")]
    result = experiment_phase_oscillation(
        doc, powers=powers, kappa=args.kappa, ideal=not args.sampled, workers=args.workers
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for p, table, res in zip(powers, result.tables, result.fits):
        (out / f"phase_{p:g}mW.csv").write_text(table.to_csv())
        print(f"P = {p:g} mW: f = {res['f']:.4f} MHz, B = {res['B']:.4f}, gamma = {res['gamma']:.4f} /us")
    (out / "phase_fits.csv").write_text(result.summary_csv())
    if result.linear is not None:
        print(f"f per mW: {result.linear.slope:.4f} +- {result.linear.slope_error:.4f} MHz/mW")


if __name__ == "__main__":
    main()
