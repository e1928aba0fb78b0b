"""Shared file-format helpers: version stamping and CSV/JSON writers."""
import csv
import io
import json
import math

from .errors import VersionMismatchError

FORMAT_VERSION = "1.0"
_VERSION_PREFIX = "# format_version:"


def check_version(version, what="file"):
    """Accept ``version`` if its major component matches ours."""
    if version is None:
        return
    major = str(version).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise VersionMismatchError(
            f"{what} has format_version {version!r}; this build reads {FORMAT_VERSION}"
        )


def split_version_comment(text):
    """Strip a leading ``# format_version: X`` line; return (version, rest)."""
    if text.startswith(_VERSION_PREFIX):
        first, _, rest = text.partition("\n")
        return first[len(_VERSION_PREFIX):].strip(), rest
    return None, text


def fmt_float(x):
    # repr round-trips doubles exactly
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def csv_text(header, rows):
    buf = io.StringIO()
    buf.write(f"{_VERSION_PREFIX} {FORMAT_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def json_text(obj):
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
