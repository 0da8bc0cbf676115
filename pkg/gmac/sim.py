"""
Monte-Carlo transmission harness: encode, modulate through the level
decompositions, add noise, SIC-decode and count errors.
"""
import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import BLOCKLENGTH
from gmac.errors import ConfigError, DomainError
from gmac.models import BerReport, ComponentStats, DesignBundle, SimConfig
from gmac.constellation import (constellations_from_json, decompose_levels, resolve_constellations,
                                snr_to_noise_var)
from gmac.ldpc import (EncoderState, TannerGraph, encode, extract_message, make_encoder,
                       peg_construct, quantize_degrees, read_graph, write_graph)
from gmac.decoder import LevelStage, build_state_table, sic_decode
from gmac.codedesign import load_bundle

logger = logging.getLogger(__name__)

# Frames are simulated in fixed chunks so stopping never depends on the worker count
FRAME_CHUNK = 16


@dataclass
class LevelCodes:
    level: int
    graphs: Tuple[TannerGraph, TannerGraph]
    encoders: Tuple[EncoderState, EncoderState]


@dataclass
class CodeSet:
    """Constructed codes for every (user, level) of a design bundle, in SIC order."""
    bundle: DesignBundle
    levels: List[LevelCodes]

    @property
    def n(self):
        return self.levels[0].graphs[0].n

    def encoder(self, user, level):
        return self._by_level(level).encoders[user - 1]

    def _by_level(self, level):
        for codes in self.levels:
            if codes.level == level:
                return codes
        raise DomainError(f"No codes for level {level}")

    @staticmethod
    def graph_name(user, level):
        return f"u{user}_l{level}.graph"

    @staticmethod
    def graph_seed(seed, user, level):
        return seed * 100 + 10 * user + level

    @classmethod
    def construct(cls, bundle: DesignBundle, n=BLOCKLENGTH, seed=0):
        levels = []
        for level in bundle.order:
            graphs, encoders = [], []
            for user in (1, 2):
                dd = bundle.code(user, level).distribution()
                var_degrees, check_degrees = quantize_degrees(n, dd)
                graph = peg_construct(n, var_degrees, check_degrees, cls.graph_seed(seed, user, level))
                graphs.append(graph)
                encoders.append(make_encoder(graph))
                logger.info("User %d level %d: n=%d m=%d k=%d", user, level, n, graph.m, encoders[-1].k)
            levels.append(LevelCodes(level, tuple(graphs), tuple(encoders)))
        return cls(bundle, levels)

    def save(self, graphs_dir):
        os.makedirs(graphs_dir, exist_ok=True)
        paths = []
        for codes in self.levels:
            for user, graph in zip((1, 2), codes.graphs):
                paths.append(write_graph(graph, os.path.join(graphs_dir, self.graph_name(user, codes.level))))
        return paths

    @classmethod
    def load(cls, bundle: DesignBundle, graphs_dir):
        levels = []
        for level in bundle.order:
            graphs = tuple(read_graph(os.path.join(graphs_dir, cls.graph_name(user, level))) for user in (1, 2))
            levels.append(LevelCodes(level, graphs, tuple(make_encoder(g) for g in graphs)))
        return cls(bundle, levels)


def encode_levels(messages, code_set: CodeSet):
    """
    Args:
        messages: {(user, level): message bits}

    Returns:
        dict: {(user, level): codeword}
    """
    words = {}
    for codes in code_set.levels:
        for user in (1, 2):
            msg = messages[(user, codes.level)]
            encoder = codes.encoders[user - 1]
            if len(msg) != encoder.k:
                raise DomainError(f"Message for user {user} level {codes.level} has length {len(msg)}, "
                                  f"encoder expects {encoder.k}")
            words[(user, codes.level)] = encode(encoder, msg)
    return words


def modulate(words, decompositions, n):
    """Sum of the levels per user; bit 0 maps to +h, bit 1 to -h."""
    out = []
    for user, dec in zip((1, 2), decompositions):
        level_bits = np.stack([words.get((user, level), np.zeros(n, dtype=np.uint8))
                               for level in range(1, dec.L + 1)])
        out.append(dec.modulate(level_bits))
    return out[0], out[1]


def transmit(messages, code_set: CodeSet, decompositions):
    """Encode every level and superpose them per user; returns (x1, x2)."""
    return modulate(encode_levels(messages, code_set), decompositions, code_set.n)


def frame_rng(seed, snr_index, frame_index):
    """Independent stream per (seed, SNR point, frame)."""
    return np.random.default_rng([seed, snr_index, frame_index])


def awgn(x_sum, noise_var, rng):
    if not noise_var > 0:
        raise DomainError("Noise variance must be positive")
    x_sum = np.asarray(x_sum, dtype=float)
    return x_sum + rng.normal(0.0, np.sqrt(noise_var), size=x_sum.shape)


def _random_messages(code_set, rng):
    return {(user, codes.level): rng.integers(0, 2, size=codes.encoders[user - 1].k, dtype=np.uint8)
            for codes in code_set.levels for user in (1, 2)}


def simulate_frame(code_set, decompositions, stages, noise_var, rng, max_iter, genie=False):
    """
    One frame: random messages, transmission, noise and SIC decoding.

    Returns:
        dict: {(user, level): (bit errors, bits)}
    """
    messages = _random_messages(code_set, rng)
    words = encode_levels(messages, code_set)
    x1, x2 = modulate(words, decompositions, code_set.n)
    y = awgn(x1 + x2, noise_var, rng)
    genie_words = {lv: (words[(1, lv)], words[(2, lv)]) for lv in code_set.bundle.order} if genie else None
    results = sic_decode(y, stages, max_iter, genie_words)
    counts = {}
    for codes, result in zip(code_set.levels, results):
        for user in (1, 2):
            decoded = extract_message(codes.encoders[user - 1], result.bits[user - 1])
            sent = messages[(user, codes.level)]
            counts[(user, codes.level)] = (int(np.count_nonzero(decoded != sent)), int(sent.size))
    return counts


def _channel_constellations(cfg: SimConfig, bundle: DesignBundle):
    if cfg.channel_constellation:
        return resolve_constellations(cfg.channel_constellation)
    if bundle.points:
        return constellations_from_json(bundle.points)
    return resolve_constellations(bundle.constellation)


def run_ber(cfg: SimConfig, code_set: Optional[CodeSet] = None) -> BerReport:
    """
    Simulate every SNR point until the frame-error target or the frame budget
    is reached. Frame streams depend only on (seed, SNR index, frame index),
    so the report does not depend on the thread count.
    """
    if code_set is None:
        if not cfg.graphs_dir:
            raise ConfigError("graphs_dir is required when no constructed codes are passed")
        code_set = CodeSet.load(load_bundle(cfg.bundle), cfg.graphs_dir)
    bundle = code_set.bundle
    c1, c2 = _channel_constellations(cfg, bundle)
    decompositions = (decompose_levels(c1), decompose_levels(c2))
    channel_name = cfg.channel_constellation or bundle.constellation

    started = time.perf_counter()
    components = []
    for snr_index, snr_db in enumerate(cfg.snr_db):
        noise_var = snr_to_noise_var(snr_db, cfg.convention)
        stages = [LevelStage(codes.level, codes.graphs,
                             build_state_table(*decompositions, codes.level, noise_var, bundle.order))
                  for codes in code_set.levels]
        stats = {(u, lv): ComponentStats(snr_db=snr_db, user=u, level=lv)
                 for lv in bundle.order for u in (1, 2)}
        frames = frame_errors = 0

        def run_frame(frame_index):
            rng = frame_rng(cfg.seed, snr_index, frame_index)
            return simulate_frame(code_set, decompositions, stages, noise_var, rng, cfg.max_iter, cfg.genie)

        with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
            while frames < cfg.frames and frame_errors < cfg.error_target:
                chunk = range(frames, min(frames + FRAME_CHUNK, cfg.frames))
                for counts in pool.map(run_frame, chunk):
                    any_error = False
                    for key, (errors, bits) in counts.items():
                        s = stats[key]
                        s.bit_errors += errors
                        s.bits += bits
                        s.frames += 1
                        s.frame_errors += int(errors > 0)
                        any_error = any_error or errors > 0
                    frames += 1
                    frame_errors += int(any_error)
                    if frame_errors >= cfg.error_target:
                        break
        components.extend(stats.values())
        avg = np.mean([s.ber for s in stats.values()])
        logger.info("SNR %.2f dB: %d frames, %d frame errors, average BER %.3e",
                    snr_db, frames, frame_errors, avg)

    return BerReport(channel_constellation=channel_name, design=bundle.id or bundle.constellation,
                     components=components, runtime_s=time.perf_counter() - started, seed=cfg.seed)


SWEEP_FIELDS = ["snr_db", "user", "level", "ber", "fer", "frames",
                "bit_errors", "bits", "frame_errors", "ber_low", "ber_high"]


def write_sweep_csv(report: BerReport, path):
    """Component rows, then the averaged curve as rows with user = level = 0."""
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        writer.writeheader()
        for c in report.components:
            interval = c.ber_interval
            writer.writerow({
                "snr_db": c.snr_db, "user": c.user, "level": c.level,
                "ber": repr(c.ber), "fer": repr(c.fer), "frames": c.frames,
                "bit_errors": c.bit_errors, "bits": c.bits, "frame_errors": c.frame_errors,
                "ber_low": "" if interval is None else repr(interval[0]),
                "ber_high": "" if interval is None else repr(interval[1]),
            })
        fer = report.averaged_fer()
        for snr, ber in report.averaged().items():
            frames = max((c.frames for c in report.at(snr)), default=0)
            writer.writerow({"snr_db": snr, "user": 0, "level": 0, "ber": repr(ber),
                             "fer": repr(fer[snr]), "frames": frames})
    return path


def read_sweep_csv(path, channel_constellation="", design="") -> BerReport:
    components = []
    with open(path, "r", newline="") as f:
        for row in csv.DictReader(f):
            if int(row["user"]) == 0:
                continue
            components.append(ComponentStats(
                snr_db=float(row["snr_db"]), user=int(row["user"]), level=int(row["level"]),
                bit_errors=int(row["bit_errors"]), bits=int(row["bits"]),
                frame_errors=int(row["frame_errors"]), frames=int(row["frames"]),
            ))
    return BerReport(channel_constellation=channel_constellation, design=design, components=components)


def sweep_snr(cfg: SimConfig, out_path, code_set: Optional[CodeSet] = None) -> BerReport:
    """run_ber over the configured SNR list, written as CSV and a JSON report beside it."""
    report = run_ber(cfg, code_set)
    write_sweep_csv(report, out_path)
    json_path = os.path.splitext(out_path)[0] + ".json"
    with open(json_path, "w") as f:
        json.dump(report.to_json(), f, indent=2)
    return report
