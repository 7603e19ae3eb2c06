"""Tweet ingestion: emoji extraction, category lookup, explosion and text normalization."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

import regex

from .errors import DataError
from .jsonl import read_jsonl

VS16 = "\ufe0f"


class EmojiCategory(enum.IntEnum):
    SmileysEmotion = 0
    PeopleBody = 1
    Component = 2
    AnimalsNature = 3
    FoodDrink = 4
    TravelPlaces = 5
    Activities = 6
    Objects = 7
    Symbols = 8
    Flags = 9


N_CLASSES = len(EmojiCategory)


class NormalizeMode(str, enum.Enum):
    TOKENS = "tokens"
    PLAIN = "plain"


@dataclass(frozen=True)
class RawTweet:
    id: str
    text: str


@dataclass(frozen=True)
class Example:
    id: str
    source_id: str
    tokens: tuple[str, ...]
    label: int

    def to_json(self) -> dict:
        return {"id": self.id, "source_id": self.source_id, "tokens": list(self.tokens), "label": self.label}

    @classmethod
    def from_json(cls, obj: dict) -> "Example":
        label = obj["label"]
        if not isinstance(label, int) or not 0 <= label < N_CLASSES:
            raise ValueError(f"label out of range: {label!r}")
        tokens = obj["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise ValueError("tokens must be a list of strings")
        return cls(id=str(obj["id"]), source_id=str(obj["source_id"]), tokens=tuple(tokens), label=label)


def _strip_vs(seq: str) -> str:
    return seq.replace(VS16, "")


class CategoryTable:
    """Emoji sequence -> category lookup, loaded from a ``sequence,category`` CSV."""

    def __init__(self, mapping: dict[str, EmojiCategory], checksum: str):
        self.mapping = dict(mapping)
        self.checksum = checksum
        self._stripped: dict[str, EmojiCategory] = {}
        for seq in sorted(self.mapping):
            self._stripped.setdefault(_strip_vs(seq), self.mapping[seq])

    def __len__(self) -> int:
        return len(self.mapping)

    def __contains__(self, seq: str) -> bool:
        return seq in self.mapping or _strip_vs(seq) in self._stripped

    @classmethod
    def from_csv_text(cls, text: str) -> "CategoryTable":
        checksum = hashlib.sha256(text.encode("utf-8")).hexdigest()
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["sequence", "category"]:
            raise DataError(f"category table: bad header {header!r}")
        mapping: dict[str, EmojiCategory] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                hexseq, name = row
                seq = "".join(chr(int(cp, 16)) for cp in hexseq.split("-"))
                category = EmojiCategory[name]
            except (ValueError, KeyError) as exc:
                raise DataError(f"category table line {lineno}: {row!r}") from exc
            if mapping.setdefault(seq, category) != category:
                raise DataError(f"category table line {lineno}: {hexseq} mapped twice")
        return cls(mapping, checksum)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "CategoryTable":
        if path is None:
            text = resources.files("emofed").joinpath("data/emoji_categories.csv").read_text("utf-8")
        else:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise DataError(f"{path}: {exc.strerror}") from exc
        return cls.from_csv_text(text)


_default_table: CategoryTable | None = None


def default_table() -> CategoryTable:
    global _default_table
    if _default_table is None:
        _default_table = CategoryTable.load()
    return _default_table


# Clusters holding any of these are emoji even when absent from the table.
_PICTOGRAPHIC = regex.compile(r"[\p{Extended_Pictographic}\p{Regional_Indicator}\u20e3]")
_GRAPHEME = regex.compile(r"\X")


def _is_emoji(cluster: str, table: CategoryTable) -> bool:
    return cluster in table or _PICTOGRAPHIC.search(cluster) is not None


def extract_emojis(text: str, table: CategoryTable) -> list[str]:
    return [m.group() for m in _GRAPHEME.finditer(text) if _is_emoji(m.group(), table)]


def categorize(emoji: str, table: CategoryTable) -> EmojiCategory | None:
    """Return the emoji's category, or None when the table does not know it."""
    found = table.mapping.get(emoji)
    if found is None:
        found = table._stripped.get(_strip_vs(emoji))
    return found


def strip_emojis(text: str, table: CategoryTable) -> str:
    # Emoji become a space so that adjacent words are not glued together.
    return "".join(" " if _is_emoji(c, table) else c for c in _GRAPHEME.findall(text))


_RT = regex.compile(r"^\s*rt\s+(?=@)")
_URL = regex.compile(r"(?:[a-z][a-z0-9+.\-]*://|www\.)\S+")
_MENTION = regex.compile(r"@\w+")
_HASHTAG = regex.compile(r"#\w+")
_PLACEHOLDER = regex.compile(r"(<mention>|<url>|<hashtag>)")
_DROP = regex.compile(r"[\p{Nd}\p{P}\p{S}]+")


def normalize(text: str, mode: NormalizeMode | str = NormalizeMode.TOKENS, table: CategoryTable | None = None) -> list[str]:
    mode = NormalizeMode(mode)
    table = table or default_table()
    text = strip_emojis(text, table)
    # U+0130 is the only code point whose full lowercase differs from the simple one.
    text = text.replace("\u0130", "i").lower()
    text = _RT.sub("", text)
    tokens = mode is NormalizeMode.TOKENS
    text = _URL.sub(" <url> " if tokens else " ", text)
    text = _MENTION.sub(" <mention> " if tokens else " ", text)
    text = _HASHTAG.sub(" <hashtag> " if tokens else " ", text)
    pieces = _PLACEHOLDER.split(text) if tokens else [text]
    out: list[str] = []
    for i, piece in enumerate(pieces):
        if i % 2:
            out.append(piece)
        else:
            out.extend(_DROP.sub("", piece).split())
    return out


def explode(tweet: RawTweet, table: CategoryTable, mode: NormalizeMode | str = NormalizeMode.TOKENS) -> list[Example]:
    labels = [categorize(e, table) for e in extract_emojis(tweet.text, table)]
    labels = [c for c in labels if c is not None]
    if not labels:
        return []
    tokens = tuple(normalize(tweet.text, mode, table))
    return [
        Example(id=f"{tweet.id}#{i}", source_id=tweet.id, tokens=tokens, label=int(label))
        for i, label in enumerate(labels)
    ]


@dataclass
class PrepStats:
    tweets_in: int = 0
    tweets_dropped_no_emoji: int = 0
    examples_out: int = 0
    unknown_emojis: int = 0

    def to_json(self) -> dict:
        return dict(vars(self))


def prepare(
    tweets: Iterable[RawTweet], table: CategoryTable, mode: NormalizeMode | str = NormalizeMode.TOKENS
) -> tuple[list[Example], PrepStats]:
    stats = PrepStats()
    examples: list[Example] = []
    for tweet in tweets:
        stats.tweets_in += 1
        emojis = extract_emojis(tweet.text, table)
        stats.unknown_emojis += sum(categorize(e, table) is None for e in emojis)
        exploded = explode(tweet, table, mode)
        if not exploded:
            stats.tweets_dropped_no_emoji += 1
        examples.extend(exploded)
    stats.examples_out = len(examples)
    return examples, stats


def read_tweets(path: str | Path) -> list[RawTweet]:
    tweets: list[RawTweet] = []
    seen: set[str] = set()
    for lineno, obj in read_jsonl(path):
        tid, text = obj.get("id"), obj.get("text")
        if not isinstance(tid, str) or not tid or not isinstance(text, str):
            raise DataError(f"{path}:{lineno}: expected {{\"id\": non-empty string, \"text\": string}}")
        if tid in seen:
            raise DataError(f"{path}:{lineno}: duplicate tweet id {tid!r}")
        seen.add(tid)
        tweets.append(RawTweet(tid, text))
    return tweets


def read_examples(path: str | Path) -> list[Example]:
    examples = []
    for lineno, obj in read_jsonl(path):
        try:
            examples.append(Example.from_json(obj))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad example record ({exc})") from exc
    return examples
