"""Parsing of raw model output text into structured answers."""

from __future__ import annotations

import json
import re

_TRAILING_COMMA = re.compile(r",\s*([}\]])")


def parse_answer_text(text: str) -> dict:
    """Model output text to a dict; {} for anything that is not a json object.

    Tolerates trailing commas before ] or } (the transcript style the episodes
    themselves exhibit); everything else must be strict json.
    """
    stripped = text.strip()
    candidates = [stripped]
    relaxed = _TRAILING_COMMA.sub(r"\1", stripped)
    if relaxed != stripped:
        candidates.append(relaxed)
    for candidate in candidates:
        try:
            loaded = json.loads(candidate)
        except (json.JSONDecodeError, ValueError):
            continue
        if isinstance(loaded, dict):
            return loaded
        return {}
    return {}
