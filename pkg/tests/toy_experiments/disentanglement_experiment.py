#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Pitch information left in the codes of toy models.

Fresh pitch probes are trained on the frozen codes of an adversarial and a
non-adversarial UnetED and of an adversarial DuoED (both of its codes). The
adversarial UnetED should give the lower held-out pitch AUC, the DuoED pitch
code should carry more pitch information than its timbre code, and the pitch
leakage of the adversarial UnetED should fall during training. The leakage
curves are plotted to `leakage.png`.
"""

import argparse

import matplotlib.pyplot as plt

from pyRearrange.evaluation import disentanglement_report
from pyRearrange.training import TrainConfig

from toy_setup import (SEEDS, TOY_LEARNING_RATE, configure_logging,
                       majority, toy_corpus, train_toy_model)


def leakage_curve(records):
    """Return the epochs and the pitch leakage recorded at their end."""
    points = [(r["epoch"], r["pitch_leakage"]) for r in records
              if "pitch_leakage" in r]
    return [e for e, _ in points], [v for _, v in points]


def main():
    """Run the experiment over the seeds and report the checks."""
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--root", default="toy_corpora")
    parser.add_argument("--max-steps", type=int, default=2000)
    args = parser.parse_args()
    configure_logging()

    lower_auc, duo_order, leakage_falls = [], [], []
    fig, ax = plt.subplots()
    for seed in SEEDS:
        corpus = toy_corpus(args.root, seed)
        models, records = {}, {}
        for name, kind, adversarial in (("unet_adv", "unet", True),
                                        ("unet_plain", "unet", False),
                                        ("duo_adv", "duo", True)):
            trainer, records[name] = train_toy_model(
                corpus, kind, adversarial, seed, args.max_steps,
                track_leakage=True)
            models[name] = trainer.model

        arms = {"unet_adv": models["unet_adv"],
                "unet_plain": models["unet_plain"],
                "duo_timbre": models["duo_adv"],
                "duo_pitch": (models["duo_adv"], "pitch")}
        report = disentanglement_report(
            arms, list(corpus.pairs("train")), list(corpus.pairs("test")),
            TrainConfig(learning_rate=TOY_LEARNING_RATE), seed)
        print(f"seed {seed}: {report.to_json()}")
        lower_auc.append(report.gap("unet_plain", "unet_adv") > 0)
        duo_order.append(report.gap("duo_pitch", "duo_timbre") > 0)

        epochs, leakage = leakage_curve(records["unet_adv"])
        leakage_falls.append(leakage[-1] < leakage[0])
        ax.plot(epochs, leakage, label=f"adversarial, seed {seed}")
        epochs, leakage = leakage_curve(records["unet_plain"])
        ax.plot(epochs, leakage, "--", label=f"plain, seed {seed}")

    ax.set_xlabel("epoch")
    ax.set_ylabel("mean pitch decoder output on the timbre code")
    ax.legend()
    fig.savefig("leakage.png")

    for name, passes in (("adversarial lowers pitch AUC", lower_auc),
                         ("duo pitch code > timbre code", duo_order),
                         ("pitch leakage falls", leakage_falls)):
        print(f"{name}: {passes} -> {'pass' if majority(passes) else 'FAIL'}")


if __name__ == "__main__":
    main()
