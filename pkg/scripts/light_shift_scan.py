"""Light shift of the addressing beam versus its displacement from the atom.

Writes the shift-vs-displacement table (with the Gaussian fit in the
header) and prints the fitted 1/e^2 radius.
"""

import argparse
from pathlib import Path

from rydsim.experiments import experiment_spectroscopy
from rydsim.ryx import parse_file

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=CONFIGS / "spectroscopy.ryx")
    ap.add_argument("--sampled", action="store_true", help="finite shots instead of exact populations")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default=".")
    args = ap.parse_args()

    result = experiment_spectroscopy(parse_file(args.config), ideal=not args.sampled, workers=args.workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "light_shift_vs_displacement.csv").write_text(result.to_csv())
    fit = result.fit
    print(f"w0 = {result.waist:.4f} +- {fit.error('w'):.4f} um, peak = {fit['a']:.4f} MHz")
    print(f"table written to {out / 'light_shift_vs_displacement.csv'}")


if __name__ == "__main__":
    main()
