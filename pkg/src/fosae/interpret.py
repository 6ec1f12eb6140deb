"""Positive / negative argument examples for each learned predicate."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .model import FosaeModel, encode_with_attention, predicate_logits
from .puzzle import NUM_FEATURES, decode_object


@dataclass(frozen=True)
class ArgumentTuple:
    """One unit's hard argument list on one input, with the predicate's truth."""

    sample: int
    unit: int
    objects: tuple  # object (row) index per argument slot
    attributes: tuple  # decoded (tile, x, y) per slot, or None if not an 8-puzzle row
    truth: bool


@dataclass
class PredicateExamples:
    predicate: int
    positive: list = field(default_factory=list)
    negative: list = field(default_factory=list)


def _attributes(row):
    row = np.asarray(row)
    if row.shape[-1] != NUM_FEATURES:
        return None
    return decode_object(row)


def collect_examples(model: FosaeModel, data, predicate, max_k=10, encoded=None):
    """First ``max_k`` positive and negative argument lists of ``predicate`` in data order.

    ``data`` is a stack of object sets (B, N, F).  Samples are scanned in
    order and, within a sample, units in index order.
    """
    c = model.config
    if not 0 <= predicate < c.num_predicates:
        raise ValueError(f"predicate must be in [0, {c.num_predicates}), got {predicate}")
    data = np.asarray(data)
    states, idx = encoded if encoded is not None else encode_with_attention(model, data)
    out = PredicateExamples(predicate)
    for b in range(len(data)):
        for u in range(c.num_units):
            truth = bool(states[b, u * c.num_predicates + predicate])
            bucket = out.positive if truth else out.negative
            if len(bucket) >= max_k:
                continue
            objects = tuple(int(i) for i in idx[b, u])
            attrs = tuple(_attributes(data[b, i]) for i in objects)
            bucket.append(ArgumentTuple(b, u, objects, None if None in attrs else attrs, truth))
        if len(out.positive) >= max_k and len(out.negative) >= max_k:
            break
    return out


def collect_all(model: FosaeModel, data, max_k=10):
    data = np.asarray(data)
    encoded = encode_with_attention(model, data)
    return [collect_examples(model, data, p, max_k, encoded) for p in range(model.config.num_predicates)]


def reevaluate(model: FosaeModel, data, predicate, example: ArgumentTuple):
    """Recompute the predicate on the example's argument rows."""
    rows = np.asarray(data)[example.sample][list(example.objects)]
    args = rows.reshape(1, 1, *rows.shape).repeat(model.config.num_units, axis=1)
    logits = predicate_logits(model, args)[0, 0, predicate]
    return bool(logits[0] >= logits[1])


def _describe(example: ArgumentTuple):
    if example.attributes is None:
        return " ".join(f"arg{k + 1}=obj{o}" for k, o in enumerate(example.objects))
    return " ".join(f"arg{k + 1}=({t},{x},{y})" for k, (t, x, y) in enumerate(example.attributes))


def render_report(examples, fmt="text"):
    """Render collected examples as text (``arg1=(tile,x,y) ... -> true``) or CSV."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["predicate", "bucket", "rank", "sample", "unit", "objects", "arguments", "truth"])
        for ex in examples:
            for bucket, items in (("positive", ex.positive), ("negative", ex.negative)):
                if not items:
                    writer.writerow([ex.predicate, bucket, "", "", "", "", "(none)", ""])
                for rank, item in enumerate(items):
                    writer.writerow([ex.predicate, bucket, rank, item.sample, item.unit,
                                     " ".join(map(str, item.objects)), _describe(item),
                                     "true" if item.truth else "false"])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = []
    for ex in examples:
        lines.append(f"predicate {ex.predicate}")
        for bucket, items in (("positive", ex.positive), ("negative", ex.negative)):
            lines.append(f"  {bucket}:")
            if not items:
                lines.append("    (none)")
            for item in items:
                lines.append(f"    {_describe(item)} -> {'true' if item.truth else 'false'}")
    return "\n".join(lines) + "\n"
