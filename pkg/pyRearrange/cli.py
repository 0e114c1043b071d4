#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command line interface of the rearrangement pipeline.

The `pyrearrange` program has one subcommand per pipeline stage::

    pyrearrange synth-data --out corpus
    pyrearrange prepare MIDI_DIR AUDIO_DIR --out corpus
    pyrearrange train corpus --model unet --adversarial on --out run
    pyrearrange train-probe run/model.pt corpus --out run/probe.pt
    pyrearrange evaluate run/model.pt corpus --source probe --probe run/probe.pt
    pyrearrange transcribe run/model.pt clip.wav --out clip.mid
    pyrearrange rearrange run/model.pt a.wav b.wav --out a_b.mid --out-wav a_b.wav

Settings come from the dataclass defaults, then from the YAML file given with
`--config`, then from the command line flags. Every command logs the hash of
its resolved settings and, when it writes to a directory, stores them there as
`run_config.yaml`.

The exit code is 0 on success, 2 for usage errors, 3 for data errors and 4 for
model errors. Errors are reported on one line as `error: ClassName: message`.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import torch

from pyRearrange.config import config_hash, load_config_file, \
    write_config_file
from pyRearrange.corpus import Corpus, CorpusEntry, save_cqt, split_indices
from pyRearrange.errors import DataError, EmptyScore, ModelError
from pyRearrange.evaluation import (SOURCES, evaluate_iad, evaluate_scores,
                                    pitch_leakage, probe_examples)
from pyRearrange.features import compute_cqt, load_audio_file, write_audio
from pyRearrange.models import ModelConfig, build_model
from pyRearrange.symbolic import (InstrumentMap, events_to_pianoroll,
                                  parse_midi, pianoroll_to_midi,
                                  save_pianoroll)
from pyRearrange.synthgen import (ToyDatasetConfig, default_timbres,
                                  generate_toy_dataset, render_pianoroll)
from pyRearrange.training import (ChunkDataset, Trainer, TrainConfig,
                                  load_checkpoint, load_probe,
                                  save_checkpoint, save_probe, train_probe)
from pyRearrange.transfer import (TIMBRE_TIME_MODES, TransferRequest,
                                  rearrange, transcribe)


_log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MODEL = 4

_AUDIO_EXTENSIONS = (".wav", ".flac", ".ogg", ".mp3", ".m4a")
_MIDI_EXTENSIONS = (".mid", ".midi")


@dataclass
class RunConfig:
    """
    Fully resolved settings of a command.

    Attributes
    ----------
    command: str
        Subcommand name.
    settings: dict
        Paths, flags and embedded configurations.
    """

    command: str
    settings: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        """Hash of the command and its settings."""
        return config_hash(asdict(self))

    def record(self, out_dir: Optional[str] = None) -> None:
        """Log the settings hash and store the settings in a directory."""
        _log.info("%s config hash %s", self.command, self.hash)
        if out_dir is not None:
            write_config_file(os.path.join(out_dir, "run_config.yaml"),
                              {**asdict(self), "config_hash": self.hash})


def _file_config(args) -> dict:
    return load_config_file(args.config) if args.config else {}


def _seed(args, default: int = 0) -> int:
    return args.seed if args.seed is not None else default


def cmd_synth_data(args) -> int:
    """Generate a synthetic corpus."""
    info = _file_config(args)
    if args.seed is not None:
        info["seed"] = args.seed
    if args.num_clips is not None:
        info["num_clips"] = args.num_clips
    if args.workers is not None:
        info["workers"] = args.workers
    cfg = ToyDatasetConfig.from_mapping(info)

    os.makedirs(args.out, exist_ok=True)
    run = RunConfig("synth-data", {"out": args.out,
                                   "dataset": cfg.to_dict()})
    corpus = generate_toy_dataset(cfg, args.out, progress=args.verbose)
    run.record(args.out)
    print(corpus.digest())
    return EXIT_OK


def _pair_files(midi_dir: str, audio_dir: str) -> List[tuple]:
    audio = {}
    for name in sorted(os.listdir(audio_dir)):
        stem, ext = os.path.splitext(name)
        if ext.lower() in _AUDIO_EXTENSIONS:
            audio.setdefault(stem, os.path.join(audio_dir, name))
    pairs = []
    for name in sorted(os.listdir(midi_dir)):
        stem, ext = os.path.splitext(name)
        if ext.lower() not in _MIDI_EXTENSIONS:
            continue
        if stem not in audio:
            _log.warning("No audio for %s, skipping", name)
            continue
        pairs.append((stem, os.path.join(midi_dir, name), audio[stem]))
    return pairs


def cmd_prepare(args) -> int:
    """Build a corpus of CQT and pianoroll archives from aligned files."""
    instrument_map = InstrumentMap.named(args.instrument_map)
    scores = []
    for stem, midi_path, audio_path in _pair_files(args.midi_dir,
                                                   args.audio_dir):
        with open(midi_path, "rb") as f:
            try:
                events = parse_midi(f.read(), instrument_map)
            except EmptyScore as exc:
                _log.warning("Skipping %s: %s", midi_path, exc)
                continue
        scores.append((stem, events, audio_path))
    if not scores:
        raise DataError(f"No usable (MIDI, audio) pairs in {args.midi_dir} "
                        f"and {args.audio_dir}")
    seed = _seed(args)
    run = RunConfig("prepare", {"midi_dir": args.midi_dir,
                                "audio_dir": args.audio_dir,
                                "instrument_map": instrument_map.to_dict(),
                                "seed": seed})
    splits = split_indices(len(scores), seed)
    split_of = {i: s for s, indices in splits.items() for i in indices}

    entries = []
    for i, (stem, events, audio_path) in enumerate(scores):
        clip = load_audio_file(audio_path,
                               allow_external_decoder=args.external_decoder)
        cqt = compute_cqt(clip)
        # the roll covers exactly the frames of the audio
        roll = events_to_pianoroll(events, cqt.frame_rate,
                                   cqt.T/cqt.frame_rate, instrument_map)
        split = split_of[i]
        os.makedirs(os.path.join(args.out, split), exist_ok=True)
        entry = CorpusEntry(name=stem, split=split,
                            roll=f"{split}/{stem}.roll.npz",
                            cqt=f"{split}/{stem}.cqt.npz")
        save_pianoroll(os.path.join(args.out, entry.roll), roll)
        save_cqt(os.path.join(args.out, entry.cqt), cqt)
        entries.append(entry)

    Corpus.create(args.out, entries, instrument_map, run.settings, run.hash)
    run.record(args.out)
    _log.info("Prepared %d clips", len(entries))
    return EXIT_OK


def _resolve_train(args) -> tuple:
    info = _file_config(args)
    model_info = dict(info.get("model", {}))
    train_info = dict(info.get("train", {}))
    if args.model is not None:
        model_info["kind"] = args.model
        train_info["model_kind"] = args.model
    elif "kind" in model_info:
        train_info.setdefault("model_kind", model_info["kind"])
    else:
        model_info["kind"] = train_info.get("model_kind", "unet")
    if args.adversarial is not None:
        train_info["adversarial"] = args.adversarial == "on"
    if args.seed is not None:
        train_info["seed"] = args.seed
    if args.epochs is not None:
        train_info["epochs"] = args.epochs
    return (ModelConfig.from_mapping(model_info),
            TrainConfig.from_mapping(train_info))


def cmd_train(args) -> int:
    """Train a model on the train split of a corpus."""
    corpus = Corpus.open(args.corpus)
    model_cfg, train_cfg = _resolve_train(args)
    if model_cfg.instrument_map != corpus.instrument_map:
        model_cfg.instrument_map = corpus.instrument_map
    os.makedirs(args.out, exist_ok=True)
    checkpoint_path = os.path.join(args.out, "model.pt")
    run = RunConfig("train", {"corpus": corpus.config_hash,
                              "model": model_cfg.to_dict(),
                              "train": train_cfg.to_dict()})
    run.record(args.out)

    if args.resume:
        trainer = Trainer.from_checkpoint(
            load_checkpoint(args.resume, train_cfg.model_kind))
    else:
        torch.manual_seed(train_cfg.seed)
        model = build_model(model_cfg.kind, model_cfg, seed=train_cfg.seed)
        trainer = Trainer(model, train_cfg)

    dataset = ChunkDataset(corpus.chunks("train"))
    held_out = list(corpus.pairs("val"))

    def leakage(t):
        return {"pitch_leakage": pitch_leakage(t.model, held_out)} \
            if held_out else {}

    trainer.fit(dataset, epochs=train_cfg.epochs,
                metrics_path=os.path.join(args.out, "metrics.jsonl"),
                on_epoch_end=leakage, progress=args.verbose)
    save_checkpoint(checkpoint_path, trainer.model, trainer)
    _log.info("Saved %s after %d steps", checkpoint_path, trainer.step_count)
    return EXIT_OK


def cmd_train_probe(args) -> int:
    """Train an instrument probe on the frozen timbre code of a model."""
    checkpoint = load_checkpoint(args.checkpoint)
    corpus = Corpus.open(args.corpus)
    info = _file_config(args)
    train_info = dict(info.get("train", info))
    train_info["model_kind"] = checkpoint.model.kind
    if args.seed is not None:
        train_info["seed"] = args.seed
    cfg = TrainConfig.from_mapping(train_info)
    RunConfig("train-probe", {"checkpoint": args.checkpoint,
                              "corpus": corpus.config_hash,
                              "train": cfg.to_dict()}).record()

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        probe = checkpoint.model.make_probe()
    train_probe(checkpoint.model, probe,
                probe_examples(corpus.pairs("train"), "instrument"), cfg)
    save_probe(args.out, probe)
    return EXIT_OK


def _emit_result(result, out: Optional[str]) -> None:
    print(result.format_table())
    if out is None:
        print(result.to_json())
    else:
        with open(out, "a", encoding="utf-8") as f:
            f.write(result.to_json() + "\n")


def cmd_evaluate(args) -> int:
    """Report per-second instrument activity detection AUC."""
    if args.scores is not None:
        with open(args.scores, "r", encoding="utf-8") as f:
            fixture = json.load(f)
        try:
            scores = [c["scores"] for c in fixture["clips"]]
            labels = [c["labels"] for c in fixture["clips"]]
            names = list(fixture["instrument_names"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"Malformed scores file {args.scores}: "
                             f"{exc!r}") from exc
        result = evaluate_scores(scores, labels, names, args.pooling,
                                 source="scores")
        RunConfig("evaluate", {"scores": args.scores,
                               "pooling": args.pooling}).record()
        _emit_result(result, args.out)
        return EXIT_OK

    if args.checkpoint is None or args.corpus is None:
        raise ValueError("evaluate needs a checkpoint and a corpus, or "
                         "--scores")
    checkpoint = load_checkpoint(args.checkpoint)
    corpus = Corpus.open(args.corpus)
    probe = load_probe(args.probe) if args.probe else None
    RunConfig("evaluate", {"checkpoint": args.checkpoint,
                           "corpus": corpus.config_hash,
                           "source": args.source, "split": args.split,
                           "pooling": args.pooling}).record()
    result = evaluate_iad(checkpoint.model, corpus.pairs(args.split),
                          args.source, probe, args.pooling)
    _emit_result(result, args.out)
    return EXIT_OK


def cmd_transcribe(args) -> int:
    """Transcribe an audio clip to MIDI."""
    checkpoint = load_checkpoint(args.checkpoint)
    RunConfig("transcribe", {"checkpoint": args.checkpoint,
                             "audio": args.audio,
                             "threshold": args.threshold}).record()
    clip = load_audio_file(args.audio,
                           allow_external_decoder=args.external_decoder)
    roll = transcribe(checkpoint.model, clip, args.threshold)
    with open(args.out, "wb") as f:
        f.write(pianoroll_to_midi(roll))
    return EXIT_OK


def cmd_rearrange(args) -> int:
    """Rearrange a source clip for the timbre of a target clip."""
    checkpoint = load_checkpoint(args.checkpoint)
    RunConfig("rearrange", {"checkpoint": args.checkpoint,
                            "source": args.source, "target": args.target,
                            "threshold": args.threshold,
                            "timbre_time_mode": args.timbre_time_mode}
              ).record()
    source = load_audio_file(args.source,
                             allow_external_decoder=args.external_decoder)
    target = load_audio_file(args.target,
                             allow_external_decoder=args.external_decoder)
    result = rearrange(TransferRequest(source, target, checkpoint.model,
                                       args.threshold,
                                       args.timbre_time_mode))
    with open(args.out, "wb") as f:
        f.write(pianoroll_to_midi(result.roll))
    if args.out_wav:
        timbres = default_timbres(result.roll.instrument_map)
        write_audio(args.out_wav, render_pianoroll(result.roll, timbres,
                                                   source.sample_rate))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Return the argument parser of the program."""
    parser = argparse.ArgumentParser(
        prog="pyrearrange",
        description="Pitch and timbre disentanglement for music "
                    "transcription and composition style transfer.")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress at INFO level")
    parser.add_argument("--log-file", help="also write the log to a file")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="YAML settings file")
        p.add_argument("--seed", type=int, help="random seed")
        return p

    p = add("synth-data", cmd_synth_data, "generate a synthetic corpus")
    p.add_argument("--out", required=True, help="corpus directory")
    p.add_argument("--num-clips", type=int)
    p.add_argument("--workers", type=int)

    p = add("prepare", cmd_prepare, "build a corpus from MIDI and audio")
    p.add_argument("midi_dir")
    p.add_argument("audio_dir")
    p.add_argument("--out", required=True, help="corpus directory")
    p.add_argument("--instrument-map", default="five",
                   choices=("five", "arrangement", "general_midi"))
    p.add_argument("--external-decoder", action="store_true",
                   help="decode compressed audio with ffmpeg")

    p = add("train", cmd_train, "train a model")
    p.add_argument("corpus")
    p.add_argument("--model", choices=("duo", "unet"))
    p.add_argument("--adversarial", choices=("on", "off"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out", required=True, help="run directory")

    p = add("train-probe", cmd_train_probe,
            "train an instrument probe on a frozen model")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("--out", required=True, help="probe file")

    p = add("evaluate", cmd_evaluate, "instrument activity detection AUC")
    p.add_argument("checkpoint", nargs="?")
    p.add_argument("corpus", nargs="?")
    p.add_argument("--source", default="probe",
                   choices=SOURCES + ("dt", "summed"))
    p.add_argument("--probe", help="probe file for the probe source")
    p.add_argument("--split", default="test",
                   choices=("train", "val", "test"))
    p.add_argument("--pooling", default="pooled",
                   choices=("pooled", "per_clip"))
    p.add_argument("--scores", help="JSON file of per-second scores and "
                                    "labels to evaluate directly")
    p.add_argument("--out", help="file the JSON result is appended to")

    for name, func, help_text in (
            ("transcribe", cmd_transcribe, "transcribe audio to MIDI"),
            ("rearrange", cmd_rearrange, "rearrange a clip for the "
                                         "timbre of another")):
        p = add(name, func, help_text)
        p.add_argument("checkpoint")
        if name == "transcribe":
            p.add_argument("audio")
        else:
            p.add_argument("source")
            p.add_argument("target")
            p.add_argument("--timbre-time-mode", default="average",
                           choices=TIMBRE_TIME_MODES)
            p.add_argument("--out-wav", help="render the result to WAV")
        p.add_argument("--threshold", type=float, default=0.5)
        p.add_argument("--out", required=True, help="MIDI file")
        p.add_argument("--external-decoder", action="store_true",
                       help="decode compressed audio with ffmpeg")
    return parser


def _configure_logging(verbose: bool, log_file: Optional[str]) -> None:
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s "
                               "%(message)s",
                        handlers=handlers, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the program.

    Parameters
    ----------
    argv : list of str, optional
        Arguments without the program name. The default is `sys.argv[1:]`.

    Returns
    -------
    int
        Exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    _configure_logging(args.verbose, args.log_file)

    try:
        return args.func(args)
    except DataError as exc:
        code = EXIT_DATA
        error = exc
    except ModelError as exc:
        code = EXIT_MODEL
        error = exc
    except OSError as exc:
        code = EXIT_DATA
        error = exc
    except (ValueError, KeyError, TypeError) as exc:
        code = EXIT_USAGE
        error = exc
    except RuntimeError as exc:
        # torch reports shape and device mismatches of loaded models this way
        code = EXIT_MODEL
        error = exc
    _log.debug("Command failed", exc_info=error)
    print(f"error: {type(error).__name__}: {error}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
