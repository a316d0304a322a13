"""Whole-file atomic writes and CSV emission."""

from __future__ import annotations

import csv
import io
import os
import tempfile


def atomic_write(path: str, payload: bytes | str) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_csv(path: str, header, rows) -> None:
    atomic_write(path, csv_text(header, rows))
