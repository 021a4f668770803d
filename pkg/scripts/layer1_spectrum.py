"""Frequency picture of a descrambled first DEER-network layer.

Trains the 64 tanh -> 64 logsig network on synthetic traces, descrambles
the first layer with the second-derivative functional and writes the
descrambled weights, the magnitude of their Fourier conjugate and SVG
heatmaps of both.

    python3 scripts/layer1_spectrum.py --seed 1 --out runs/layer1
"""

import argparse
import json
import logging
from pathlib import Path

import numpy as np

from descrambler import analysis, deer, descramble, netlab, spectral
from descrambler.core import save_matrix, save_network
from descrambler.svg import heatmap_svg


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--traces", type=int, default=2000)
    ap.add_argument("--epochs", type=int, default=3000)
    ap.add_argument("--patience", type=int, default=100)
    ap.add_argument("--out", default="runs/layer1")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = deer.generate_dataset(deer.DeerGridConfig(seed=args.seed), args.traces)
    cfg = netlab.TrainConfig(epochs=args.epochs, seed=args.seed, patience=args.patience)
    net, report = netlab.train([(64, "tanh"), (64, "logsig")], ds, cfg)
    save_network(net, out / "net.net")
    print(f"training stopped at epoch {report.stopped_epoch}, validation {report.validation_loss[-1]:.3e}")

    w1 = net.weights[0]
    prob = descramble.assemble_problem(net, ds.inputs, descramble.WiretapSpec(1), spectral.build_second_derivative(64))
    res = descramble.optimize(prob)
    print(f"descrambler: {res.iterations} iterations, eta {res.objective_trace[0]:.4g} -> {res.value:.4g}")

    pw = res.p @ w1
    mag = np.abs(analysis.fourier_conjugate(pw))
    save_matrix(res.p, out / "P.dmat")
    save_matrix(pw, out / "descrambled_W1.dmat")
    save_matrix(mag, out / "conjugate_magnitude.dmat")
    (out / "raw_W1.svg").write_text(heatmap_svg(w1, symmetric=True))
    (out / "descrambled_W1.svg").write_text(heatmap_svg(pw, symmetric=True))
    (out / "conjugate_magnitude.svg").write_text(heatmap_svg(np.fft.fftshift(mag)))

    raw = analysis.band_medians(np.abs(analysis.fourier_conjugate(w1)))
    bands = analysis.band_medians(mag)
    summary = {"raw": raw, "descrambled": bands, "stopped_epoch": report.stopped_epoch, "seed": args.seed}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for name, b in (("raw", raw), ("descrambled", bands)):
        print(f"{name:12s} zero/passband {b['zero'] / b['passband']:.2f}  high/passband {b['high'] / b['passband']:.2f}")


if __name__ == "__main__":
    main()
