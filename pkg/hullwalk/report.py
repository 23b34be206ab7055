"""
Report serialization.

JSON reports use sorted keys, two-space indentation and floats written with 17
significant digits, so the same run always produces the same bytes.
Non-finite floats are written as the strings "inf", "-inf" and "nan".
Path reports in CSV have the header t,x1..xn; every other report flattens
to key,value rows with dotted keys.
"""

import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

logger = logging.getLogger('hullwalk.report')


def _plain(value):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def format_float(value):
    """Finite float with 17 significant digits, always readable back as a float."""
    text = format(value, ".17g")
    if not any(c in text for c in ".e"):
        text += ".0"
    return text


class FixedFloatEncoder(json.JSONEncoder):
    """JSONEncoder that writes every float with 17 significant digits."""

    def iterencode(self, o, _one_shot=False):
        markers = {} if self.check_circular else None
        encode_str = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        indent = self.indent if self.indent is None or isinstance(self.indent, str) else " " * self.indent

        def floatstr(value):
            if not math.isfinite(value):
                raise ValueError(f"non-finite float {value!r} reached the encoder")
            return format_float(value)

        return json.encoder._make_iterencode(
            markers, self.default, encode_str, indent, floatstr, self.key_separator,
            self.item_separator, self.sort_keys, self.skipkeys, False)(o, 0)


def to_json(report, timing=False):
    """Canonical JSON text of a report."""
    return json.dumps(_plain(report.to_dict(timing=timing)), cls=FixedFloatEncoder, sort_keys=True,
                      indent=2) + "\n"


def _flatten(prefix, value, rows):
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], rows)
    elif isinstance(value, list) and value and isinstance(value[0], (dict, list)):
        for i, item in enumerate(value):
            _flatten(f"{prefix}.{i}", item, rows)
    elif isinstance(value, list):
        rows.append((prefix, " ".join(repr(item) if isinstance(item, float) else str(item)
                                      for item in value)))
    else:
        rows.append((prefix, repr(value) if isinstance(value, float) else str(value)))


def path_to_csv(times, points):
    """CSV text with header t,x1..xn and one row per grid time."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t"] + [f"x{j + 1}" for j in range(points.shape[1])])
    for t, row in zip(times, points):
        writer.writerow([repr(float(t))] + [repr(float(x)) for x in row])
    return buffer.getvalue()


def read_path_csv(text):
    """
    Parse path CSV text back into arrays.

    Returns:
        tuple: (times, points)

    Raises:
        ValueError: If the header is not t,x1..xn
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[0] != "t" or header[1:] != [f"x{j + 1}" for j in range(len(header) - 1)]:
        raise ValueError(f"not a path CSV header: {header}")
    rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    return data[:, 0], data[:, 1:]


def to_csv(report):
    """CSV text of a report: the path table for simulate, key,value rows otherwise."""
    results = report.results
    if "path" in results:
        return path_to_csv(results["path"]["times"], results["path"]["points"])
    rows = []
    _flatten("", {"experiment": report.experiment, "version": report.version,
                  "parameters": _plain(report.parameters), "results": _plain(results)}, rows)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    return buffer.getvalue()


def read_flat_csv(text):
    """Parse key,value CSV text into a dict of strings."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["key", "value"]:
        raise ValueError(f"not a key,value CSV header: {header}")
    return {row[0]: row[1] for row in reader if row}


def emit_report(report, fmt="json", path=None, timing=False):
    """
    Write a report to a file or stdout.

    Args:
        report (ExperimentReport): The report
        fmt (str): "json" or "csv"
        path (str, optional): Output file; stdout when None or "-"
        timing (bool): Include wall_time in JSON output (breaks byte-identity
            between reruns)

    Returns:
        str: The text written

    Raises:
        ValueError: On an unknown format
        OSError: If the file cannot be written; the message names the path
    """
    if fmt == "json":
        text = to_json(report, timing=timing)
    elif fmt == "csv":
        text = to_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")

    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return text

    target = Path(path)
    try:
        if target.parent and not target.parent.exists():
            target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write report to {target}: {e}") from e
    logger.info(f"Report written to {target}")
    return text
