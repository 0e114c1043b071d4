#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Instrument activity detection on the toy corpus.

For each seed this trains an adversarial and a non-adversarial UnetED and
reports the per-second AUC of every score source, next to an untrained model
read through a trained probe. It then checks that

- the adversarial model reaches an average probe AUC of at least 0.9 while
  the untrained model stays within [0.4, 0.6] and a probe trained on
  shuffled labels stays at or below 0.6,
- adversarial training does not hurt the `decoder_dt` source,
- the `summed_roll` source is at least as good as `decoder_dt`,

each for a majority of the seeds.
"""

import argparse

from pyRearrange.evaluation import evaluate_iad
from pyRearrange.models import ModelConfig, build_model

from toy_setup import (SEEDS, configure_logging, majority, toy_corpus,
                       train_toy_model, trained_probe)


def run_seed(root, seed, max_steps):
    """Return the average AUC of each model and source for one seed."""
    corpus = toy_corpus(root, seed)
    test = list(corpus.pairs("test"))
    aucs = {}

    untrained = build_model("unet", ModelConfig(
        instrument_map=corpus.instrument_map), seed=seed)
    probe = trained_probe(untrained, corpus, seed)
    aucs["untrained", "probe"] = evaluate_iad(untrained, test, "probe",
                                              probe).average_auc

    for adversarial in (True, False):
        name = "adversarial" if adversarial else "plain"
        trainer, _ = train_toy_model(corpus, "unet", adversarial, seed,
                                     max_steps)
        model = trainer.model
        probe = trained_probe(model, corpus, seed)
        for source in ("probe", "decoder_dt", "summed_roll"):
            result = evaluate_iad(model, test, source, probe)
            aucs[name, source] = result.average_auc
            print(f"seed {seed} {name} {source}")
            print(result.format_table())
        if adversarial:
            null_probe = trained_probe(model, corpus, seed,
                                       permute_labels=True)
            aucs["permuted", "probe"] = evaluate_iad(
                model, test, "probe", null_probe).average_auc
    return aucs


def main():
    """Run the experiment over the seeds and report the checks."""
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--root", default="toy_corpora")
    parser.add_argument("--max-steps", type=int, default=2000)
    args = parser.parse_args()
    configure_logging()

    runs = [run_seed(args.root, seed, args.max_steps) for seed in SEEDS]
    checks = {
        "probe AUC >= 0.9": [r["adversarial", "probe"] >= 0.9 for r in runs],
        "permuted labels <= 0.6": [r["permuted", "probe"] <= 0.6
                                   for r in runs],
        "untrained in [0.4, 0.6]": [0.4 <= r["untrained", "probe"] <= 0.6
                                    for r in runs],
        "adversarial >= plain (decoder_dt)": [
            r["adversarial", "decoder_dt"] >= r["plain", "decoder_dt"]
            for r in runs],
        "summed_roll >= decoder_dt": [
            all(r[m, "summed_roll"] >= r[m, "decoder_dt"]
                for m in ("adversarial", "plain")) for r in runs],
    }
    for name, passes in checks.items():
        print(f"{name}: {passes} -> {'pass' if majority(passes) else 'FAIL'}")


if __name__ == "__main__":
    main()
