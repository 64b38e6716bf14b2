"""Topic grammar and filter matching.

Topics are '/'-separated non-empty segments with no whitespace. Publish
topics never contain wildcards. A subscription filter may additionally end
in a single trailing multi-level wildcard segment ``#``, which matches one
or more further segments (so ``a/#`` matches ``a/b`` and ``a/b/c`` but not
``a`` itself).
"""

from __future__ import annotations

import re

from ..errors import InvalidTopic

WILDCARD = "#"

# non-empty '/'-separated segments, no whitespace anywhere
_GRAMMAR = re.compile(r"[^\s/]+(?:/[^\s/]+)*\Z")


def split_segments(value: str) -> list[str]:
    """Split and validate the shared part of the grammar.

    Raises InvalidTopic for empty strings, empty segments, or whitespace.
    """
    if not _GRAMMAR.match(value):
        raise InvalidTopic(f"malformed topic: {value!r}")
    return value.split("/")


def validate_topic(value: str) -> str:
    """Validate a publish topic: wildcard-free."""
    if not _GRAMMAR.match(value):
        raise InvalidTopic(f"malformed topic: {value!r}")
    if WILDCARD in value and WILDCARD in value.split("/"):
        raise InvalidTopic(f"publish topic may not contain a {WILDCARD!r} segment: {value!r}")
    return value


def validate_filter(value: str) -> str:
    """Validate a subscription filter: exact topic or trailing-'#' form."""
    if not _GRAMMAR.match(value):
        raise InvalidTopic(f"malformed filter: {value!r}")
    if WILDCARD in value:
        segments = value.split("/")
        if WILDCARD in segments[:-1]:
            raise InvalidTopic(f"wildcard only allowed as the last segment: {value!r}")
    return value


def is_wildcard_filter(value: str) -> bool:
    return value.endswith("/" + WILDCARD) or value == WILDCARD


def match_filter(filter_: str, topic: str) -> bool:
    """True iff ``topic`` matches ``filter_``.

    Exact segment equality, or the filter ends in ``#`` and the topic
    extends the filter's prefix by at least one segment.
    """
    validate_filter(filter_)
    validate_topic(topic)
    return match_filter_fast(filter_, topic)


def match_filter_fast(filter_: str, topic: str) -> bool:
    """Matching without validation, for pre-validated inputs."""
    if filter_.split("/")[-1] == WILDCARD:
        # keeping the trailing slash makes startswith equivalent to
        # segment-prefix equality plus at-least-one-extra-segment
        return topic.startswith(filter_[:-1])
    return filter_ == topic
