import json
import logging
import os
import sys

import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_dataset(rows, columns, path=None, integer_columns=()):
    """
    Write benchmark rows as CSV with a header row

    Args:
        rows (list of dict): One dict per row
        columns (list of str): Column order; keys missing from a row are left empty
        path (str, optional): Output file. Standard output if None or "-"
        integer_columns (iterable of str, optional): Columns written as integers, empty where missing
    """
    df = pd.DataFrame(rows, columns=columns)
    for col in integer_columns:
        if col in df.columns:
            df[col] = pd.to_numeric(df[col], errors="coerce").astype("Int64")
    if path in (None, "-"):
        df.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return df
    _ensure_parent(path)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"wrote {len(df)} rows to {path}")
    return df


def read_dataset(path):
    return pd.read_csv(path, float_precision="round_trip")


def write_gate_program(path, header, gates):
    """
    Write a gate program as JSON lines: the header object, then one object per gate

    Args:
        path (str): Output file, "-" for standard output
        header (dict): {"L", "formula", "N", "dt"}
        gates (list of GateOp): Gates in the order they act
    """
    lines = [json.dumps(header)] + [json.dumps(g.to_dict()) for g in gates]
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        _ensure_parent(path)
        with open(path, "w") as f:
            f.write(text)
        logger.info(f"wrote {len(gates)} gates to {path}")
    return len(gates)


def read_gate_program(path):
    """Return (header, list of gate dicts)"""
    with open(path, "r") as f:
        docs = [json.loads(line) for line in f if line.strip()]
    if not docs:
        raise ValueError(f"{path} is empty")
    return docs[0], docs[1:]
