"""Seeded synthetic bibliographic corpus with known authorship."""
from __future__ import annotations

import json
import math
import random
import string
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import AuthorMention, Corpus, GoldProfile, PaperRecord, RawEntry, RawProfile, write_jsonl, write_papers

# rough relative frequencies of first-name initials
_INITIAL_WEIGHTS = {
    "j": 11, "m": 10, "a": 9, "d": 7, "s": 7, "r": 7, "c": 6, "k": 5, "p": 5, "t": 5, "l": 5,
    "g": 4, "e": 4, "h": 4, "b": 4, "f": 3, "n": 3, "w": 2, "v": 2, "i": 2, "y": 2, "o": 1,
    "z": 1, "u": 1, "q": 0.5, "x": 0.5,
}
_SYLLABLES = [c + v for c in "bdfghklmnprstvz" for v in "aeiou"] + ["an", "er", "in", "or", "el", "ov", "sk", "berg"]


class SynthError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_authors: int = 2000
    n_surnames: int = 500
    surname_exponent: float = 1.0
    surname_offset: float = 5.0
    papers_mean: float = 8.0
    start_year: int = 1980
    end_year: int = 2020
    career_span: int = 20
    community_size: int = 50
    circle_size: int = 8
    n_fields: int = 20
    coauthors_mean: float = 2.0
    p_external_coauthor: float = 0.1
    refs_mean: float = 10.0
    p_self: float = 0.15
    p_community: float = 0.5
    p_random: float = 0.35
    p_preferential: float = 0.5
    p_repeat: float = 0.7
    missing_initial_rate: float = 0.05
    second_initial_rate: float = 0.5
    title_typo_rate: float = 0.2
    seed: int = 7

    def validate(self) -> None:
        for name in ("p_self", "p_community", "p_random", "p_external_coauthor", "p_preferential", "p_repeat",
                     "missing_initial_rate", "second_initial_rate", "title_typo_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SynthError(f"{name} must lie in [0, 1], got {value}")
        if not math.isclose(self.p_self + self.p_community + self.p_random, 1.0, abs_tol=1e-9):
            raise SynthError("p_self + p_community + p_random must equal 1")
        for name in ("n_authors", "n_surnames", "career_span", "community_size", "circle_size", "n_fields"):
            if getattr(self, name) < 1:
                raise SynthError(f"{name} must be positive")
        if self.surname_offset < 0 or self.surname_exponent < 0:
            raise SynthError("surname law needs non-negative offset and exponent")
        if self.papers_mean <= 0 or self.coauthors_mean < 0 or self.refs_mean < 0:
            raise SynthError("papers_mean must be positive; coauthor and reference means non-negative")
        if self.end_year < self.start_year:
            raise SynthError("end_year before start_year")
        if self.career_span > self.end_year - self.start_year + 1:
            raise SynthError("career_span longer than the simulated period")

    @classmethod
    def from_json(cls, obj: dict) -> SynthConfig:
        return cls(**obj)


@dataclass
class SynthAuthor:
    author_id: int
    surname: str
    first_initial: str
    second_initial: str | None
    community: int
    start: int
    end: int


@dataclass
class SynthCorpus:
    config: SynthConfig
    authors: list[SynthAuthor]
    papers: list[PaperRecord]
    truth: dict[tuple[int, int], int]
    """(paper_id, author_position) -> true author id."""
    profiles: list[GoldProfile] = field(default_factory=list)
    raw_profiles: list[RawProfile] = field(default_factory=list)

    def corpus(self) -> Corpus:
        return Corpus(self.papers)

    def author_papers(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = defaultdict(set)
        for (pid, _), aid in self.truth.items():
            out[aid].add(pid)
        return out

    def write(self, outdir: str | Path) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "papers": outdir / "papers.jsonl",
            "truth": outdir / "truth.jsonl",
            "profiles": outdir / "profiles.jsonl",
            "profiles_raw": outdir / "profiles_raw.jsonl",
            "config": outdir / "synth_config.json",
        }
        write_papers(self.papers, paths["papers"])
        write_jsonl(
            ({"paper_id": pid, "author_position": pos, "true_author_id": aid} for (pid, pos), aid in sorted(self.truth.items())),
            paths["truth"],
        )
        write_jsonl((p.to_json() for p in self.profiles), paths["profiles"])
        write_jsonl((p.to_json() for p in self.raw_profiles), paths["profiles_raw"])
        paths["config"].write_text(json.dumps(asdict(self.config), sort_keys=True, indent=2) + "\n")
        return paths


def surname_law(config: SynthConfig) -> np.ndarray:
    """Zipf-Mandelbrot probabilities ``(rank + offset) ** -exponent`` over the surname pool."""
    ranks = np.arange(1, config.n_surnames + 1, dtype=float)
    p = (ranks + config.surname_offset) ** -config.surname_exponent
    return p / p.sum()


def _surname_pool(n: int, rng: random.Random) -> list[str]:
    names: list[str] = []
    seen = set()
    while len(names) < n:
        k = rng.choice((2, 2, 3, 3, 4))
        name = "".join(rng.choice(_SYLLABLES) for _ in range(k))
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def _typo(text: str, rng: random.Random) -> str:
    k = rng.randrange(len(text))
    return text[:k] + rng.choice(string.ascii_lowercase) + text[k + 1:]


def generate(config: SynthConfig | None = None) -> SynthCorpus:
    config = config or SynthConfig()
    config.validate()
    rng = random.Random(config.seed)
    nprng = np.random.Generator(np.random.PCG64(config.seed))

    surnames = _surname_pool(config.n_surnames, rng)
    surname_p = surname_law(config)
    surname_idx = nprng.choice(config.n_surnames, size=config.n_authors, p=surname_p)
    letters = sorted(_INITIAL_WEIGHTS)
    weights = [_INITIAL_WEIGHTS[c] for c in letters]

    n_comm = max(1, math.ceil(config.n_authors / config.community_size))
    community_of = [k % n_comm for k in range(config.n_authors)]
    rng.shuffle(community_of)
    members: dict[int, list[int]] = defaultdict(list)
    authors = []
    last_start = config.end_year - config.career_span + 1
    for aid in range(config.n_authors):
        start = rng.randint(config.start_year, last_start)
        length = rng.randint(max(1, config.career_span // 4), config.career_span)
        second = rng.choice(letters) if rng.random() < config.second_initial_rate else None
        authors.append(
            SynthAuthor(aid, surnames[surname_idx[aid]], rng.choices(letters, weights)[0], second,
                        community_of[aid], start, start + length - 1)
        )
        members[community_of[aid]].append(aid)
    # each author's usual collaborators, drawn from the own community
    circles = []
    for author in authors:
        pool = [a for a in members[author.community] if a != author.author_id]
        circles.append(rng.sample(pool, min(config.circle_size, len(pool))))

    # (year, lead author, per-author sequence) drafts, then chronological ids
    drafts = []
    paper_counts = np.maximum(1, np.rint(nprng.exponential(config.papers_mean, size=config.n_authors))).astype(int)
    n_coauthors = nprng.poisson(config.coauthors_mean, size=int(paper_counts.sum()))
    k = 0
    for author in authors:
        for seq in range(paper_counts[author.author_id]):
            year = rng.randint(author.start, author.end)
            pool = circles[author.author_id]
            chosen: list[int] = []
            for _ in range(int(n_coauthors[k])):
                if pool and rng.random() >= config.p_external_coauthor:
                    pick = rng.choice(pool)
                else:
                    pick = rng.randrange(config.n_authors)
                if pick != author.author_id and pick not in chosen:
                    chosen.append(pick)
            k += 1
            drafts.append((year, author.author_id, seq, [author.author_id] + chosen))
    drafts.sort(key=lambda d: (d[0], d[1], d[2]))

    papers_of: dict[int, list[int]] = defaultdict(list)
    # "random" references stay inside the citing paper's field
    field_papers: dict[int, list[int]] = defaultdict(list)
    field_cited: dict[int, list[int]] = defaultdict(list)
    reading: dict[int, list[int]] = defaultdict(list)
    ref_counts = nprng.poisson(config.refs_mean, size=len(drafts))
    vocab = ["".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4))) for _ in range(3000)]

    papers: list[PaperRecord] = []
    truth: dict[tuple[int, int], int] = {}
    for pid, (year, lead, _, team) in enumerate(drafts):
        field = authors[lead].community % config.n_fields
        refs: set[int] = set()
        if pid > 0:
            for _ in range(int(ref_counts[pid])):
                u = rng.random()
                target = None
                if u < config.p_self:
                    own = papers_of[rng.choice(team)]
                    if own:
                        target = rng.choice(own)
                elif u < config.p_self + config.p_community:
                    # coauthor community: the lead's reading list, else the collaborator circle
                    if reading[lead] and rng.random() < config.p_repeat:
                        target = rng.choice(reading[lead])
                    else:
                        peer = papers_of[rng.choice(circles[lead])] if circles[lead] else []
                        if peer:
                            target = rng.choice(peer)
                else:
                    cited = field_cited[field]
                    if cited and rng.random() < config.p_preferential:
                        target = rng.choice(cited)
                    elif field_papers[field]:
                        target = rng.choice(field_papers[field])
                if target is not None:
                    refs.add(target)
            field_cited[field].extend(sorted(refs))
            reading[lead].extend(sorted(refs))

        mentions = []
        for pos, aid in enumerate(team):
            a = authors[aid]
            truth[(pid, pos)] = aid
            if rng.random() < config.missing_initial_rate:
                mentions.append(AuthorMention(a.surname))
            else:
                mentions.append(AuthorMention(a.surname, a.first_initial, a.second_initial))
        title = " ".join(rng.choice(vocab) for _ in range(rng.randint(5, 9)))
        papers.append(PaperRecord(pid, year, tuple(mentions), frozenset(refs), title, f"journal {rng.randrange(200)}"))
        for aid in set(team):
            papers_of[aid].append(pid)
        field_papers[field].append(pid)

    result = SynthCorpus(config, authors, papers, truth)
    by_author = result.author_papers()
    for author in authors:
        ids = by_author.get(author.author_id)
        if not ids:
            continue
        result.profiles.append(GoldProfile(f"a{author.author_id}", author.surname, frozenset(ids)))
        entries = []
        for pid in sorted(ids):
            paper = papers[pid]
            title = paper.title
            if rng.random() < config.title_typo_rate:
                title = _typo(title, rng)
            entries.append(RawEntry(paper.year, title, tuple(m.surname for m in paper.authors), paper.journal))
        result.raw_profiles.append(RawProfile(f"a{author.author_id}", author.surname, tuple(entries)))
    return result


def load_truth(path: str | Path) -> dict[tuple[int, int], int]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[(int(rec["paper_id"]), int(rec["author_position"]))] = int(rec["true_author_id"])
    return out
