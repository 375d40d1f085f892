"""Plot loss curves from one or more run directories.

    python docs/plot_training.py out/classification-alice out/classification-adam
"""
import pathlib
import sys

import matplotlib.pyplot as plt
import pandas as pd


def main(dirs):
    fig, ax = plt.subplots(figsize=(6, 4))
    for d in map(pathlib.Path, dirs):
        logs = sorted(d.glob("train_*.csv"))
        if not logs:
            continue
        frames = [pd.read_csv(p) for p in logs]
        loss = pd.concat([f["loss"] for f in frames], axis=1)
        step = frames[0]["step"]
        ax.plot(step, loss.median(axis=1), label=d.name)
        ax.fill_between(step, loss.min(axis=1), loss.max(axis=1), alpha=0.2)
    ax.set_xlabel("step")
    ax.set_ylabel("minibatch loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig("training.png", dpi=150)


if __name__ == "__main__":
    main(sys.argv[1:])
