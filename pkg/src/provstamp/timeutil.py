"""ISO 8601 timestamp helpers (stdlib ``fromisoformat`` on 3.10 rejects ``Z``)."""

from __future__ import annotations

import re
from datetime import date, datetime, timedelta, timezone

_ISO = re.compile(
    r"""^(?P<y>\d{4})-(?P<mo>\d{2})-(?P<d>\d{2})
    (?:[T ](?P<h>\d{2}):(?P<mi>\d{2})(?::(?P<s>\d{2})(?:[.,](?P<frac>\d{1,9}))?)?
       (?P<tz>Z|z|[+-]\d{2}(?::?\d{2})?)?
    )?$""",
    re.X,
)


def parse_iso(text) -> datetime | None:
    """Parse an ISO 8601 date or date-time; None when ``text`` is not one.

    Results are timezone-aware only when the input carries an offset.
    """
    if not isinstance(text, str):
        return None
    m = _ISO.match(text.strip())
    if m is None:
        return None
    try:
        if m["h"] is None:
            d = date(int(m["y"]), int(m["mo"]), int(m["d"]))
            return datetime(d.year, d.month, d.day)
        frac = (m["frac"] or "0")[:6].ljust(6, "0")
        dt = datetime(
            int(m["y"]), int(m["mo"]), int(m["d"]),
            int(m["h"]), int(m["mi"]), int(m["s"] or 0), int(frac),
        )
    except ValueError:
        return None
    tz = m["tz"]
    if tz is None:
        return dt
    if tz in ("Z", "z"):
        return dt.replace(tzinfo=timezone.utc)
    sign = -1 if tz[0] == "-" else 1
    digits = tz[1:].replace(":", "")
    hours, minutes = int(digits[:2]), int(digits[2:] or 0)
    if hours > 23 or minutes > 59:
        return None
    return dt.replace(tzinfo=timezone(sign * timedelta(hours=hours, minutes=minutes)))


def format_utc(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc)
    out = (
        f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}"
        f"T{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}"
    )
    if dt.microsecond:
        out += "." + f"{dt.microsecond:06d}".rstrip("0")
    return out + "Z"


def is_utc_timestamp(text) -> bool:
    """True for a full date-time carrying an explicit offset."""
    dt = parse_iso(text)
    return dt is not None and dt.tzinfo is not None


def normalize_timestamp(text):
    """Convert an offset-bearing timestamp to ``...Z`` form; anything else is returned as-is."""
    if is_utc_timestamp(text):
        try:
            return format_utc(parse_iso(text))
        except OverflowError:
            pass
    return text


def utcnow() -> str:
    return format_utc(datetime.now(timezone.utc))


def as_utc(dt: datetime) -> datetime:
    """Naive datetimes are taken to be UTC."""
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)
