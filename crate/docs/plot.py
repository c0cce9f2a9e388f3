"""Plot the tables written by the circulon CLI.

    python docs/plot.py out/pi_pulse/trajectory.txt
    python docs/plot.py out/optimize/iterations.txt out/noise/rf_noise.txt -o figs

Each table starts with `#` comment lines; the `# columns:` line names the
columns. The plot is chosen from the column names.
"""

import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_table(path):
    columns = None
    for line in path.read_text().splitlines():
        if line.startswith("# columns:"):
            columns = line.split(":", 1)[1].split()
    if columns is None:
        raise SystemExit(f"{path}: no '# columns:' header")
    data = np.loadtxt(path, comments="#", ndmin=2)
    return {name: data[:, k] for k, name in enumerate(columns[: data.shape[1]])}


def trajectory(t, ax):
    ax.plot(t["t_ns"], t["mean_m"], label="<m>")
    ax.fill_between(t["t_ns"], t["mean_m"] - t["sigma_m"], t["mean_m"] + t["sigma_m"], alpha=0.3)
    ax.set_xlabel("t (ns)")
    ax.set_ylabel("m")
    if "scs_overlap" in t:
        twin = ax.twinx()
        twin.plot(t["t_ns"], t["scs_overlap"], "C3", label="closest SCS overlap")
        twin.set_ylabel("overlap")
        twin.set_ylim(0, 1.02)


def iterations(t, ax):
    ax.semilogy(t["iter"], t["J_T"])
    ax.set_xlabel("iteration")
    ax.set_ylabel("J_T")


def rf_noise(t, ax):
    ax.errorbar(t["f_noise"], t["mean"], yerr=t["sigma"], marker="o")
    ax.set_xlabel("f_noise")
    ax.set_ylabel("mean fidelity")


def qsl(t, ax):
    valid = t["valid"] > 0
    ax.semilogy(t["t_stop_ns"][valid], t["N_iter"][valid], "o", label="valid")
    ax.semilogy(t["t_stop_ns"][~valid], t["N_iter"][~valid], "x", label="invalid")
    ax.set_xlabel("t_stop (ns)")
    ax.set_ylabel("iterations")
    ax.legend()


def populations(t, ax):
    ax.bar(t["m"], t["population"])
    ax.set_xlabel("m")
    ax.set_ylabel("population")


def envelope(t, ax):
    names = list(t)
    ax.plot(t[names[0]], t[names[1]], label=names[1])
    if len(names) > 2:
        ax.plot(t[names[0]], t[names[2]], label=names[2])
    ax.set_xlabel(names[0])
    ax.legend()


PLOTS = [
    ("mean_m", trajectory),
    ("J_T", iterations),
    ("f_noise", rf_noise),
    ("N_iter", qsl),
    ("population", populations),
]


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("tables", nargs="+", type=pathlib.Path)
    p.add_argument("-o", "--out", type=pathlib.Path, default=pathlib.Path("."))
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for path in args.tables:
        t = read_table(path)
        plot = next((f for key, f in PLOTS if key in t), envelope)
        fig, ax = plt.subplots(figsize=(7, 4))
        plot(t, ax)
        ax.set_title(path.name)
        fig.tight_layout()
        target = args.out / (path.stem + ".png")
        fig.savefig(target, dpi=120)
        print(target)


if __name__ == "__main__":
    main()
