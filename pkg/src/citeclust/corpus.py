"""Paper records, the inverse citation index, name blocking and gold profiles."""
from __future__ import annotations

import enum
import json
import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

MIN_YEAR = 1800
MAX_YEAR = 2100
TITLE_MATCH_THRESHOLD = 0.9


class CorpusError(ValueError):
    pass


_SEPARATORS = re.compile("[\\s\\-\u2010\u2011\u2013\u2014_]+")


def normalize_name(text: str) -> str:
    """Lowercase, fold diacritics and collapse whitespace/hyphen runs to one space."""
    folded = unicodedata.normalize("NFKD", text)
    folded = "".join(ch for ch in folded if not unicodedata.combining(ch))
    return _SEPARATORS.sub(" ", folded.lower()).strip()


def _normalize_initial(value: str | None) -> str | None:
    if value is None:
        return None
    value = normalize_name(value)
    return value[0] if value else None


@dataclass(frozen=True, order=True)
class AuthorMention:
    surname: str
    first_initial: str | None = None
    second_initial: str | None = None

    def __post_init__(self):
        if not self.surname:
            raise CorpusError("author surname must be non-empty")
        if self.second_initial is not None and self.first_initial is None:
            raise CorpusError(f"second initial without first initial for {self.surname!r}")

    @classmethod
    def parse(cls, obj: dict) -> AuthorMention:
        surname = normalize_name(str(obj.get("surname", "")))
        first = _normalize_initial(obj.get("first_initial"))
        second = _normalize_initial(obj.get("second_initial"))
        return cls(surname, first, second)

    @property
    def identity(self) -> tuple[str, str | None]:
        # coauthors are matched on surname plus first initial only
        return (self.surname, self.first_initial)

    def to_json(self) -> dict:
        out: dict = {"surname": self.surname}
        if self.first_initial is not None:
            out["first_initial"] = self.first_initial
        if self.second_initial is not None:
            out["second_initial"] = self.second_initial
        return out


@dataclass(frozen=True)
class PaperRecord:
    paper_id: int
    year: int
    authors: tuple[AuthorMention, ...]
    refs: frozenset[int] = frozenset()
    title: str | None = None
    journal: str | None = None

    def to_json(self) -> dict:
        out: dict = {
            "id": self.paper_id,
            "year": self.year,
            "authors": [a.to_json() for a in self.authors],
            "refs": sorted(self.refs),
        }
        if self.title is not None:
            out["title"] = self.title
        if self.journal is not None:
            out["journal"] = self.journal
        return out


@dataclass
class LoadReport:
    papers: int = 0
    mentions: int = 0
    dangling_refs: int = 0
    self_refs: int = 0


class Corpus:
    """Immutable collection of papers plus the inverse of their reference lists."""

    def __init__(self, papers: Iterable[PaperRecord], report: LoadReport | None = None):
        by_id: dict[int, PaperRecord] = {}
        for paper in papers:
            if paper.paper_id in by_id:
                raise CorpusError(f"duplicate paper_id {paper.paper_id}")
            by_id[paper.paper_id] = paper
        self.report = report or LoadReport()
        cleaned: dict[int, PaperRecord] = {}
        for pid in sorted(by_id):
            paper = by_id[pid]
            if not MIN_YEAR <= paper.year <= MAX_YEAR:
                raise CorpusError(f"paper {pid}: year {paper.year} outside [{MIN_YEAR}, {MAX_YEAR}]")
            refs = paper.refs
            if pid in refs:
                self.report.self_refs += 1
                refs = refs - {pid}
            dangling = [r for r in refs if r not in by_id]
            if dangling:
                self.report.dangling_refs += len(dangling)
                refs = refs.difference(dangling)
            if refs is not paper.refs:
                paper = PaperRecord(pid, paper.year, paper.authors, frozenset(refs), paper.title, paper.journal)
            cleaned[pid] = paper
        self.papers = cleaned
        self.report.papers = len(cleaned)
        self.report.mentions = sum(len(p.authors) for p in cleaned.values())

        citing: dict[int, set[int]] = defaultdict(set)
        for pid, paper in cleaned.items():
            for ref in paper.refs:
                citing[ref].add(pid)
        self.citers: dict[int, frozenset[int]] = {
            pid: frozenset(citing.get(pid, ())) for pid in cleaned
        }

    def __len__(self) -> int:
        return len(self.papers)

    def __iter__(self) -> Iterator[PaperRecord]:
        return iter(self.papers.values())

    def __getitem__(self, paper_id: int) -> PaperRecord:
        return self.papers[paper_id]

    def __contains__(self, paper_id: int) -> bool:
        return paper_id in self.papers

    def citation_count(self, paper_id: int) -> int:
        return len(self.citers.get(paper_id, ()))


def parse_paper(obj: dict) -> PaperRecord:
    authors = tuple(AuthorMention.parse(a) for a in obj["authors"])
    return PaperRecord(
        paper_id=int(obj["id"]),
        year=int(obj["year"]),
        authors=authors,
        refs=frozenset(int(r) for r in obj.get("refs", ())),
        title=obj.get("title"),
        journal=obj.get("journal"),
    )


def _iter_json_lines(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected an object")
            yield lineno, obj


def load_corpus(path: str | Path) -> Corpus:
    records = []
    seen: dict[int, int] = {}
    for lineno, obj in _iter_json_lines(path):
        try:
            paper = parse_paper(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{path}:{lineno}: malformed paper record ({exc})") from None
        if paper.paper_id < 0:
            raise CorpusError(f"{path}:{lineno}: negative paper id")
        if paper.paper_id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate paper_id {paper.paper_id} (first on line {seen[paper.paper_id]})"
            )
        seen[paper.paper_id] = lineno
        records.append(paper)
    return Corpus(records)


def write_papers(papers: Iterable[PaperRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for paper in papers:
            fh.write(json.dumps(paper.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


# -- name blocks --------------------------------------------------------------


class KeyMode(str, enum.Enum):
    SURNAME_ONLY = "surname"
    SURNAME_FIRST_INITIAL = "surname_initial"


def block_key(mention: AuthorMention, mode: KeyMode) -> str:
    if mode == KeyMode.SURNAME_ONLY:
        return mention.surname
    # mentions without a first initial land in the "<surname>_" fallback block
    return f"{mention.surname}_{mention.first_initial or ''}"


@dataclass(frozen=True)
class NameBlock:
    key: str
    members: tuple[tuple[int, int], ...]
    """(paper_id, author_position) for every mention with this key."""

    @property
    def paper_ids(self) -> list[int]:
        return sorted({pid for pid, _ in self.members})

    def focal_positions(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = defaultdict(list)
        for pid, pos in self.members:
            out[pid].append(pos)
        return {pid: tuple(sorted(pos)) for pid, pos in out.items()}

    def __len__(self) -> int:
        return len(self.paper_ids)


def build_blocks(corpus: Corpus, key_mode: KeyMode | str = KeyMode.SURNAME_FIRST_INITIAL) -> list[NameBlock]:
    key_mode = KeyMode(key_mode)
    grouped: dict[str, list[tuple[int, int]]] = defaultdict(list)
    for paper in corpus:
        for pos, mention in enumerate(paper.authors):
            grouped[block_key(mention, key_mode)].append((paper.paper_id, pos))
    return [NameBlock(key, tuple(sorted(grouped[key]))) for key in sorted(grouped)]


def merge_blocks(a: NameBlock, b: NameBlock) -> NameBlock:
    return NameBlock(f"{a.key}|{b.key}", tuple(sorted(set(a.members) | set(b.members))))


# -- gold profiles ------------------------------------------------------------


@dataclass(frozen=True)
class GoldProfile:
    profile_id: str
    surname: str
    paper_ids: frozenset[int]

    def to_json(self) -> dict:
        return {"profile_id": self.profile_id, "surname": self.surname, "paper_ids": sorted(self.paper_ids)}


@dataclass(frozen=True)
class RawEntry:
    year: int
    title: str
    surnames: tuple[str, ...] = ()
    journal: str | None = None


@dataclass(frozen=True)
class RawProfile:
    profile_id: str
    surname: str
    entries: tuple[RawEntry, ...]

    def to_json(self) -> dict:
        entries = []
        for e in self.entries:
            item: dict = {"year": e.year, "title": e.title, "surnames": list(e.surnames)}
            if e.journal is not None:
                item["journal"] = e.journal
            entries.append(item)
        return {"profile_id": self.profile_id, "surname": self.surname, "entries": entries}


def load_profiles(path: str | Path, corpus: Corpus | None = None) -> tuple[list[GoldProfile], list[RawProfile]]:
    """Read a profiles file holding pre-resolved and/or raw publication-list records.

    With a corpus given, resolved paper ids absent from it are dropped.
    """
    resolved: list[GoldProfile] = []
    raw: list[RawProfile] = []
    for lineno, obj in _iter_json_lines(path):
        try:
            pid = str(obj["profile_id"])
            surname = normalize_name(str(obj["surname"]))
            if "paper_ids" in obj:
                ids = frozenset(int(x) for x in obj["paper_ids"])
                if corpus is not None:
                    ids = frozenset(x for x in ids if x in corpus)
                resolved.append(GoldProfile(pid, surname, ids))
            else:
                entries = tuple(
                    RawEntry(
                        year=int(e["year"]),
                        title=str(e["title"]),
                        surnames=tuple(normalize_name(s) for s in e.get("surnames", ())),
                        journal=e.get("journal"),
                    )
                    for e in obj["entries"]
                )
                raw.append(RawProfile(pid, surname, entries))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{path}:{lineno}: malformed profile record ({exc})") from None
    return resolved, raw


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def normalize_title(title: str) -> str:
    return " ".join(re.sub(r"[^\w\s]", " ", normalize_name(title)).split())


def edit_distance(a: str, b: str, limit: int | None = None) -> int:
    """Levenshtein distance (unit insert/delete/substitute costs).

    With ``limit`` given only the diagonal band of width ``limit`` is filled,
    and any distance above ``limit`` is reported as ``limit + 1``.
    """
    if len(a) < len(b):
        a, b = b, a
    n, m = len(a), len(b)
    if limit is None:
        previous = list(range(m + 1))
        for i, ca in enumerate(a, start=1):
            current = [i]
            for j, cb in enumerate(b, start=1):
                current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
            previous = current
        return previous[-1]
    cap = limit + 1
    if n - m > limit:
        return cap
    previous = [j if j <= limit else cap for j in range(m + 1)]
    for i in range(1, n + 1):
        lo, hi = max(1, i - limit), min(m, i + limit)
        current = [cap] * (m + 1)
        if i <= limit:
            current[0] = i
        ca = a[i - 1]
        best = current[0]
        for j in range(lo, hi + 1):
            v = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != b[j - 1]), cap)
            current[j] = v
            if v < best:
                best = v
        if best >= cap:
            return cap
        previous = current
    return previous[m]


def _histogram_bound(ca: Counter, cb: Counter) -> int:
    # each edit fixes at most one surplus character on each side
    surplus = ca - cb
    deficit = cb - ca
    return max(sum(surplus.values()), sum(deficit.values()))


def title_similarity(a: str, b: str) -> float:
    a, b = normalize_title(a), normalize_title(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest


@dataclass
class CrossrefReport:
    entries: int = 0
    matched: int = 0
    ambiguous: int = 0
    unmatched: int = 0
    empty_profiles: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "entries": self.entries,
            "matched": self.matched,
            "ambiguous": self.ambiguous,
            "unmatched": self.unmatched,
            "empty_profiles": sorted(self.empty_profiles),
        }


def crossref_profiles(
    corpus: Corpus,
    raw_profiles: Iterable[RawProfile],
    threshold: float = TITLE_MATCH_THRESHOLD,
) -> tuple[list[GoldProfile], CrossrefReport]:
    """Resolve raw publication lists to corpus paper ids.

    An entry matches a paper when the year is equal, the normalized titles are
    at least ``threshold`` similar, the profile surname is among the paper's
    author surnames, and no other paper satisfies the same three conditions.
    """
    index: dict[tuple[int, str], list[int]] = defaultdict(list)
    for paper in corpus:
        if paper.title is None:
            continue
        for surname in {a.surname for a in paper.authors}:
            index[(paper.year, surname)].append(paper.paper_id)
    norm_titles = {pid: normalize_title(corpus[pid].title) for ids in index.values() for pid in ids}
    histograms = {pid: Counter(t) for pid, t in norm_titles.items()}

    report = CrossrefReport()
    profiles = []
    for raw in sorted(raw_profiles, key=lambda r: r.profile_id):
        ids: set[int] = set()
        for entry in raw.entries:
            report.entries += 1
            title = normalize_title(entry.title)
            hist = Counter(title)
            hits = []
            for pid in index.get((entry.year, raw.surname), ()):
                other = norm_titles[pid]
                longest = max(len(title), len(other))
                if longest == 0:
                    hits.append(pid)
                    continue
                # lower bounds on the edit distance prune without changing the result
                if 1.0 - abs(len(title) - len(other)) / longest < threshold:
                    continue
                if 1.0 - _histogram_bound(hist, histograms[pid]) / longest < threshold:
                    continue
                limit = int(math.floor((1.0 - threshold) * longest)) + 1
                if 1.0 - edit_distance(title, other, limit) / longest >= threshold:
                    hits.append(pid)
            if len(hits) == 1:
                report.matched += 1
                ids.add(hits[0])
            elif hits:
                report.ambiguous += 1
            else:
                report.unmatched += 1
        if not ids:
            report.empty_profiles.append(raw.profile_id)
        profiles.append(GoldProfile(raw.profile_id, raw.surname, frozenset(ids)))
    return profiles, report
