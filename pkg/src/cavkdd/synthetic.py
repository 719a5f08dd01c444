"""Seeded generator of KDD-format traffic files for demos and tests.

The real benchmark is not redistributable inside this repository, so demos
and the test suite synthesize class-conditional records that mimic the
salient signatures of the three retained classes: normal web/mail traffic
(established connections, payload bytes both ways), SYN-flood behaviour
(tcp/S0, zero payload, saturated SYN-error rates, high connection counts)
and ICMP-amplification behaviour (icmp/ecr_i echo traffic with fixed-size
payloads and saturated same-service rates). Files use the exact on-disk
dialect of the benchmark: 42 comma-separated fields, rates printed with two
decimals, labels lowercase with a trailing period.

This module is a fixture generator only; nothing in the modeling pipeline
depends on it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .ingest import KDD_COLUMNS

RATE_COLUMNS = frozenset(c for c in KDD_COLUMNS if c.endswith("_rate"))

# services deliberately absent from generated training data; used to
# exercise the unseen-category path like the real corrected test split does
UNSEEN_TEST_SERVICES = ("http_2784", "aol", "harvest")


def _record(rng: np.random.Generator, label: str) -> dict:
    rec = {name: 0 for name in KDD_COLUMNS}
    if label == "normal":
        rec["protocol_type"] = rng.choice(["tcp", "udp"], p=[0.75, 0.25])
        if rec["protocol_type"] == "udp":
            rec["service"] = rng.choice(["domain_u", "ntp_u"], p=[0.8, 0.2])
        else:
            rec["service"] = rng.choice(["http", "smtp", "ftp_data", "telnet"],
                                        p=[0.55, 0.25, 0.15, 0.05])
        rec["flag"] = rng.choice(["SF", "REJ"], p=[0.96, 0.04])
        rec["duration"] = int(rng.geometric(0.08)) - 1
        rec["src_bytes"] = int(rng.lognormal(5.5, 1.0))
        rec["dst_bytes"] = int(rng.lognormal(6.5, 1.2))
        rec["logged_in"] = int(rng.random() < 0.7)
        rec["count"] = int(rng.integers(1, 25))
        rec["srv_count"] = int(rng.integers(1, 25))
        rec["serror_rate"] = round(float(rng.beta(1, 40)), 2)
        rec["srv_serror_rate"] = rec["serror_rate"]
        rec["rerror_rate"] = round(float(rng.beta(1, 60)), 2)
        rec["same_srv_rate"] = round(float(rng.uniform(0.7, 1.0)), 2)
        rec["diff_srv_rate"] = round(1.0 - rec["same_srv_rate"], 2)
        rec["dst_host_count"] = int(rng.integers(1, 256))
        rec["dst_host_srv_count"] = int(rng.integers(1, 256))
        rec["dst_host_same_srv_rate"] = round(float(rng.uniform(0.5, 1.0)), 2)
        rec["dst_host_same_src_port_rate"] = round(float(rng.uniform(0.0, 0.3)), 2)
    elif label == "neptune":
        rec["protocol_type"] = "tcp"
        rec["service"] = rng.choice(["private", "telnet", "finger", "ftp"],
                                    p=[0.6, 0.2, 0.1, 0.1])
        rec["flag"] = rng.choice(["S0", "REJ"], p=[0.9, 0.1])
        rec["count"] = int(rng.integers(100, 512))
        rec["srv_count"] = int(rng.integers(1, 20))
        rec["serror_rate"] = round(float(rng.uniform(0.95, 1.0)), 2)
        rec["srv_serror_rate"] = round(float(rng.uniform(0.95, 1.0)), 2)
        rec["same_srv_rate"] = round(float(rng.uniform(0.0, 0.1)), 2)
        rec["diff_srv_rate"] = round(float(rng.uniform(0.03, 0.1)), 2)
        rec["dst_host_count"] = 255
        rec["dst_host_srv_count"] = int(rng.integers(1, 30))
        rec["dst_host_serror_rate"] = round(float(rng.uniform(0.95, 1.0)), 2)
        rec["dst_host_srv_serror_rate"] = round(float(rng.uniform(0.95, 1.0)), 2)
        rec["dst_host_same_srv_rate"] = round(float(rng.uniform(0.0, 0.1)), 2)
    elif label == "smurf":
        rec["protocol_type"] = "icmp"
        rec["service"] = "ecr_i"
        rec["flag"] = "SF"
        rec["src_bytes"] = int(rng.choice([520, 1032]))
        rec["count"] = int(rng.integers(300, 512))
        rec["srv_count"] = rec["count"]
        rec["same_srv_rate"] = 1.0
        rec["dst_host_count"] = 255
        rec["dst_host_srv_count"] = 255
        rec["dst_host_same_srv_rate"] = 1.0
        rec["dst_host_same_src_port_rate"] = round(float(rng.uniform(0.9, 1.0)), 2)
    else:
        raise ValueError(f"unknown synthetic class {label!r}")
    return rec


def _format_line(rec: dict, label: str) -> str:
    fields = []
    for name in KDD_COLUMNS:
        value = rec[name]
        if name in ("protocol_type", "service", "flag"):
            fields.append(str(value))
        elif name in RATE_COLUMNS:
            fields.append(f"{float(value):.2f}")
        else:
            fields.append(str(int(value)))
    fields.append(label + ".")
    return ",".join(fields)


def write_kdd_file(path, counts: dict[str, int], seed: int = 0,
                   unseen_services: int = 0) -> Path:
    """Write a shuffled KDD-format file with the given per-class counts.

    ``unseen_services`` rows (taken from the normal class) get a service
    name never emitted for training data, to exercise the preprocessor's
    unseen-category path.
    """
    rng = np.random.default_rng(seed)
    lines = []
    for label, count in counts.items():
        for _ in range(int(count)):
            lines.append((_record(rng, label), label))
    order = rng.permutation(len(lines))
    injected = 0
    out_lines = []
    for idx in order:
        rec, label = lines[idx]
        if injected < unseen_services and label == "normal":
            rec = dict(rec)
            rec["service"] = UNSEEN_TEST_SERVICES[injected % len(UNSEEN_TEST_SERVICES)]
            injected += 1
        out_lines.append(_format_line(rec, label))
    path = Path(path)
    path.write_text("\n".join(out_lines) + ("\n" if out_lines else ""),
                    encoding="ascii")
    return path


def write_corpus(directory, seed: int = 0,
                 train_counts: dict[str, int] | None = None,
                 test_counts: dict[str, int] | None = None) -> tuple[Path, Path]:
    """Small train/test pair with roughly the benchmark's 20/22/58 class mix."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_counts = train_counts or {"normal": 600, "neptune": 660, "smurf": 1740}
    test_counts = test_counts or {"normal": 300, "neptune": 290, "smurf": 820}
    train = write_kdd_file(directory / "synthetic_train.kdd", train_counts,
                           seed=seed)
    test = write_kdd_file(directory / "synthetic_test.kdd", test_counts,
                          seed=seed + 1, unseen_services=3)
    return train, test
