"""Session log parsing, preprocessing and train/valid/test splitting.

The raw input is a TSV of play events (one row per track play). Events are
grouped into sessions, filtered according to the preprocessing rules
(vocabulary min-count, skip removal for shuffle sessions, length bounds) and
expanded into (prefix, label) training instances.
"""

import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, TextIO

MAX_LEN = 20

LOG_COLUMNS = ["session_id", "position", "track_uri", "skipped", "shuffle", "day"]


class ParseError(ValueError):
    """Malformed input data (bad row, bad header, bad file)."""


class ValidationError(ValueError):
    """Structurally valid input violating a semantic contract."""


class ConfigError(ValueError):
    """Invalid configuration (e.g. overlapping split ranges)."""


@dataclass(frozen=True)
class PlayEvent:
    track_uri: str
    position: int  # 1-based within session
    skipped: bool
    shuffle: bool
    day: int


@dataclass
class RawSession:
    id: str
    events: list  # list[PlayEvent], ordered by position

    @property
    def shuffle(self) -> bool:
        # A session whose shuffle mode changes mid-session counts as shuffle.
        return any(e.shuffle for e in self.events)

    @property
    def day(self) -> int:
        return self.events[0].day


@dataclass
class Vocabulary:
    uri_to_index: dict
    index_to_uri: list
    counts: list  # training occurrence count per index

    def __len__(self) -> int:
        return len(self.index_to_uri)

    def __contains__(self, uri: str) -> bool:
        return uri in self.uri_to_index

    def write(self, f: TextIO) -> None:
        for idx, uri in enumerate(self.index_to_uri):
            f.write(f"{idx}\t{uri}\t{self.counts[idx]}\n")

    @classmethod
    def read(cls, f: TextIO) -> "Vocabulary":
        uri_to_index, index_to_uri, counts = {}, [], []
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(f"vocabulary line {lineno}: expected 3 fields")
            idx, uri, count = int(parts[0]), parts[1], int(parts[2])
            if idx != len(index_to_uri):
                raise ParseError(f"vocabulary line {lineno}: indices not dense")
            uri_to_index[uri] = idx
            index_to_uri.append(uri)
            counts.append(count)
        return cls(uri_to_index, index_to_uri, counts)


@dataclass
class Session:
    tracks: list  # list[int], dense TrackIds
    shuffle: bool
    id: str = ""

    def __len__(self) -> int:
        return len(self.tracks)


@dataclass(frozen=True)
class TrainingInstance:
    prefix: tuple  # tuple[int, ...], length >= 1
    label: int
    shuffle: bool


@dataclass(frozen=True)
class SplitSpec:
    """Inclusive day-ordinal ranges for the three splits."""

    train_days: tuple
    valid_days: tuple
    test_days: tuple

    def __post_init__(self):
        ranges = [self.train_days, self.valid_days, self.test_days]
        names = ["train", "valid", "test"]
        for name, (lo, hi) in zip(names, ranges):
            if lo > hi:
                raise ConfigError(f"{name} day range is empty: {lo}..{hi}")
        for i in range(len(ranges)):
            for j in range(i + 1, len(ranges)):
                lo_i, hi_i = ranges[i]
                lo_j, hi_j = ranges[j]
                if lo_i <= hi_j and lo_j <= hi_i:
                    raise ConfigError(
                        f"{names[i]} and {names[j]} day ranges overlap"
                    )
        if not (self.train_days[1] < self.valid_days[0] <= self.valid_days[1] < self.test_days[0]):
            raise ConfigError("split ranges must be ordered train < valid < test")


def _parse_bool(s: str, lineno: int, col: str) -> bool:
    if s == "0":
        return False
    if s == "1":
        return True
    raise ParseError(f"line {lineno}: column {col!r} must be 0 or 1, got {s!r}")


def parse_log(f: Iterable) -> list:
    """Parse a raw event TSV into RawSessions grouped by session id.

    The header must start with LOG_COLUMNS; a trailing `premium` column is
    optional and, when present, sessions containing a non-premium row are
    dropped. Events must carry consecutive 1-based positions.
    """
    if isinstance(f, (bytes, bytearray)):
        f = io.StringIO(f.decode("utf-8"))
    elif isinstance(f, str):
        f = io.StringIO(f)
    it = iter(f)
    try:
        header = next(it).rstrip("\n").split("\t")
    except StopIteration:
        return []
    if header[: len(LOG_COLUMNS)] != LOG_COLUMNS:
        raise ParseError(f"bad header: expected columns {LOG_COLUMNS}, got {header}")
    has_premium = len(header) > len(LOG_COLUMNS) and header[len(LOG_COLUMNS)] == "premium"
    n_cols = len(LOG_COLUMNS) + (1 if has_premium else 0)

    order: list = []
    grouped: dict = {}
    non_premium: set = set()
    for lineno, line in enumerate(it, 2):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != n_cols:
            raise ParseError(f"line {lineno}: expected {n_cols} fields, got {len(parts)}")
        sid, pos_s, uri, skipped_s, shuffle_s, day_s = parts[:6]
        try:
            pos = int(pos_s)
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer position {pos_s!r}") from None
        try:
            day = int(day_s)
        except ValueError:
            raise ParseError(f"line {lineno}: non-integer day {day_s!r}") from None
        skipped = _parse_bool(skipped_s, lineno, "skipped")
        shuffle = _parse_bool(shuffle_s, lineno, "shuffle")
        if has_premium and not _parse_bool(parts[6], lineno, "premium"):
            non_premium.add(sid)
        if sid not in grouped:
            grouped[sid] = []
            order.append(sid)
        grouped[sid].append(PlayEvent(uri, pos, skipped, shuffle, day))

    sessions = []
    for sid in order:
        if sid in non_premium:
            continue
        events = sorted(grouped[sid], key=lambda e: e.position)
        for i, e in enumerate(events, 1):
            if e.position != i:
                raise ValidationError(
                    f"session {sid!r}: positions not consecutive from 1"
                )
        sessions.append(RawSession(sid, events))
    return sessions


def build_vocabulary(raw_sessions: Sequence, min_count: int = 5) -> Vocabulary:
    """Index tracks appearing at least ``min_count`` times, first-appearance order."""
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts = Counter()
    first_seen: list = []
    seen: set = set()
    for sess in raw_sessions:
        for e in sess.events:
            counts[e.track_uri] += 1
            if e.track_uri not in seen:
                seen.add(e.track_uri)
                first_seen.append(e.track_uri)
    index_to_uri = [u for u in first_seen if counts[u] >= min_count]
    uri_to_index = {u: i for i, u in enumerate(index_to_uri)}
    return Vocabulary(uri_to_index, index_to_uri, [counts[u] for u in index_to_uri])


def preprocess(raw_sessions: Iterable, vocab: Vocabulary, max_len: int = MAX_LEN) -> list:
    """Apply the preprocessing rules and return clean Sessions.

    Out-of-vocabulary tracks are removed; shuffle sessions additionally drop
    every skipped track; sessions shorter than 2 afterwards are dropped;
    over-long sessions keep their most recent ``max_len`` tracks.
    """
    out = []
    for sess in raw_sessions:
        shuffle = sess.shuffle
        kept = []
        for e in sess.events:
            if e.track_uri not in vocab:
                continue
            if shuffle and e.skipped:
                continue
            kept.append(vocab.uri_to_index[e.track_uri])
        if len(kept) < 2:
            continue
        out.append(Session(kept[-max_len:], shuffle, sess.id))
    return out


def expand_instances(session: Session, skipped: Optional[Sequence] = None) -> list:
    """Expand a session into next-track prediction instances.

    ``skipped`` optionally flags each retained position; instances whose label
    position was skipped are omitted (relevant for non-shuffle sessions, where
    skipped tracks stay in the input sequence).
    """
    n = len(session.tracks)
    instances = []
    for t in range(1, n):
        if skipped is not None and skipped[t]:
            continue
        instances.append(
            TrainingInstance(tuple(session.tracks[:t]), session.tracks[t], session.shuffle)
        )
    return instances


def sessions_to_instances(
    sessions: Iterable, skip_flags: Optional[dict] = None
) -> list:
    """Expand many sessions; ``skip_flags`` maps session id -> per-position flags."""
    out = []
    for s in sessions:
        flags = skip_flags.get(s.id) if skip_flags else None
        out.extend(expand_instances(s, flags))
    return out


def skip_flags_for(raw_sessions: Iterable, vocab: Vocabulary, max_len: int = MAX_LEN) -> dict:
    """Per-session skipped flags aligned with the tracks kept by preprocess."""
    flags = {}
    for sess in raw_sessions:
        shuffle = sess.shuffle
        kept = []
        for e in sess.events:
            if e.track_uri not in vocab:
                continue
            if shuffle and e.skipped:
                continue
            kept.append(e.skipped)
        if len(kept) < 2:
            continue
        flags[sess.id] = kept[-max_len:]
    return flags


def split_by_day(raw_sessions: Iterable, spec: SplitSpec):
    """Assign each raw session to a split by its first event's day."""
    train, valid, test = [], [], []
    for sess in raw_sessions:
        d = sess.day
        if spec.train_days[0] <= d <= spec.train_days[1]:
            train.append(sess)
        elif spec.valid_days[0] <= d <= spec.valid_days[1]:
            valid.append(sess)
        elif spec.test_days[0] <= d <= spec.test_days[1]:
            test.append(sess)
    return train, valid, test


def write_sessions(sessions: Iterable, f: TextIO) -> None:
    """One session per line: ``session_id<TAB>shuffle<TAB>t0,t1,...``."""
    for s in sessions:
        f.write(f"{s.id}\t{int(s.shuffle)}\t{','.join(map(str, s.tracks))}\n")


def read_sessions(f: TextIO) -> list:
    sessions = []
    for lineno, line in enumerate(f, 1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"session line {lineno}: expected 3 fields")
        sid, shuffle_s, tracks_s = parts
        shuffle = _parse_bool(shuffle_s, lineno, "shuffle")
        try:
            tracks = [int(t) for t in tracks_s.split(",")]
        except ValueError:
            raise ParseError(f"session line {lineno}: bad track list") from None
        sessions.append(Session(tracks, shuffle, sid))
    return sessions
