"""Seeded synthetic language plus matching probe suites.

The planted grammar puts subject-verb number agreement in every
agreement-template sentence while each individual fact statement
("<entity> <relation> <object>") surfaces in only a small, density-controlled
fraction of the corpus.  That frequency asymmetry is what the end-to-end
ordering check exploits: dense evidence is picked up early, sparse facts
late.  A small fixed share of sentences states orderings over a rank token
scale, giving the multiple-choice suite something to ask about.

All generation is a pure function of (config, seed).  Probe items are drawn
from fresh lexical combinations wherever the combinatorics allow; residual
verbatim overlaps with the corpus (inherent for cloze, whose whole point is
recalling planted facts) are counted in the manifest.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .backend.vocab import MASK_TOKEN, PAD_TOKEN, Vocabulary
from .errors import ConfigError
from .probes.data import MASK_PLACEHOLDER, dump_jsonl

ORDERING_SENTENCE_RATE = 0.02
ORDER_SCALE_SIZE = 8
SHARED_STEM_FRACTION = 0.2  # noun/verb homographs; makes token labels contextual
FRESH_SAMPLING_RETRIES = 60

SPLIT_SIZES = {"train": 300, "dev": 80, "test": 150}

LABELS = ("DET", "ADJ", "NOUN_SG", "NOUN_PL", "VERB_SG", "VERB_PL", "ENT", "REL", "OBJ", "ORD", "CMP")


@dataclass(frozen=True)
class SynthLanguageConfig:
    noun_lemmas: int = 22
    verb_lemmas: int = 22
    adjectives: int = 14
    entities: int = 30
    relations: int = 5
    objects: int = 36
    fact_count: int = 50
    fact_density: float = 0.2
    sentence_count: int = 8000
    seed: int = 7

    def __post_init__(self):
        for name in ("noun_lemmas", "verb_lemmas", "adjectives", "entities", "relations", "objects"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 <= self.fact_density <= 1.0):
            raise ConfigError(f"fact_density must be in [0, 1], got {self.fact_density}")
        if self.sentence_count < 1:
            raise ConfigError("sentence_count must be positive")
        if self.fact_count < 0:
            raise ConfigError("fact_count must be non-negative")
        if self.fact_count > self.entities * self.relations:
            raise ConfigError(
                f"fact_count {self.fact_count} exceeds the {self.entities * self.relations} "
                "available (entity, relation) pairs"
            )
        if self.fact_density > 0 and self.fact_count == 0:
            raise ConfigError("fact_density > 0 requires fact_count > 0")


PRESETS = {
    "fact_dense": SynthLanguageConfig(fact_density=0.2),
    "fact_sparse": SynthLanguageConfig(fact_density=0.02),
}


_CONSONANTS = "bdfgklmnprtvz"
_VOWELS = "aeiou"


def _pseudoword(rng: np.random.Generator, taken: set[str]) -> str:
    while True:
        n_syll = int(rng.integers(2, 4))
        word = "".join(
            _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n_syll)
        )
        # stems must not end in 's' so plural/3sg '+s' forms stay unambiguous
        if word not in taken and not word.endswith("s") and word != "the":
            taken.add(word)
            return word


@dataclass(frozen=True)
class Lexicon:
    noun_stems: tuple[str, ...]
    verb_stems: tuple[str, ...]
    adjectives: tuple[str, ...]
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    objects: tuple[str, ...]
    order_tokens: tuple[str, ...]  # rank i precedes rank j for i < j
    cmp_before: str
    cmp_after: str

    def noun(self, i: int, plural: bool) -> str:
        return self.noun_stems[i] + ("s" if plural else "")

    def verb(self, i: int, plural: bool) -> str:
        return self.verb_stems[i] + ("" if plural else "s")


def build_lexicon(cfg: SynthLanguageConfig) -> Lexicon:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x6c657869]))
    taken: set[str] = set()
    nouns = tuple(_pseudoword(rng, taken) for _ in range(cfg.noun_lemmas))
    n_shared = round(SHARED_STEM_FRACTION * min(cfg.noun_lemmas, cfg.verb_lemmas))
    verbs = list(nouns[:n_shared])
    verbs += [_pseudoword(rng, taken) for _ in range(cfg.verb_lemmas - n_shared)]
    return Lexicon(
        noun_stems=nouns,
        verb_stems=tuple(verbs),
        adjectives=tuple(_pseudoword(rng, taken) for _ in range(cfg.adjectives)),
        entities=tuple(_pseudoword(rng, taken) for _ in range(cfg.entities)),
        relations=tuple(_pseudoword(rng, taken) for _ in range(cfg.relations)),
        objects=tuple(_pseudoword(rng, taken) for _ in range(cfg.objects)),
        order_tokens=tuple(_pseudoword(rng, taken) for _ in range(ORDER_SCALE_SIZE)),
        cmp_before=_pseudoword(rng, taken),
        cmp_after=_pseudoword(rng, taken),
    )


def build_vocabulary(lex: Lexicon) -> Vocabulary:
    tokens: list[str] = [PAD_TOKEN, MASK_TOKEN, "the"]
    seen = set(tokens)
    for group in (
        [lex.noun(i, False) for i in range(len(lex.noun_stems))],
        [lex.noun(i, True) for i in range(len(lex.noun_stems))],
        [lex.verb(i, False) for i in range(len(lex.verb_stems))],
        [lex.verb(i, True) for i in range(len(lex.verb_stems))],
        list(lex.adjectives),
        list(lex.entities),
        list(lex.relations),
        list(lex.objects),
        list(lex.order_tokens),
        [lex.cmp_before, lex.cmp_after],
    ):
        for token in group:
            if token not in seen:
                seen.add(token)
                tokens.append(token)
    return Vocabulary.from_tokens(tokens)


# ---------------------------------------------------------------------------
# sentence templates; each generator returns (tokens, labels, arcs, spans)


def _agreement_sentence(lex: Lexicon, rng: np.random.Generator, transitive: bool | None = None):
    if transitive is None:
        transitive = bool(rng.random() < 0.5)
    plural = bool(rng.random() < 0.5)
    noun_i = int(rng.integers(len(lex.noun_stems)))
    verb_i = int(rng.integers(len(lex.verb_stems)))
    use_adj = bool(rng.random() < 0.5)

    tokens = ["the"]
    labels = ["DET"]
    spans = []
    if use_adj:
        tokens.append(lex.adjectives[int(rng.integers(len(lex.adjectives)))])
        labels.append("ADJ")
    subj_pos = len(tokens)
    tokens.append(lex.noun(noun_i, plural))
    labels.append("NOUN_PL" if plural else "NOUN_SG")
    spans.append((0, len(tokens), "NP"))
    verb_pos = len(tokens)
    tokens.append(lex.verb(verb_i, plural))
    labels.append("VERB_PL" if plural else "VERB_SG")
    spans.append((verb_pos, verb_pos + 1, "VP"))
    arcs = [(subj_pos, verb_pos, "sv")]

    if transitive:
        obj_plural = bool(rng.random() < 0.5)
        obj_i = int(rng.integers(len(lex.noun_stems)))
        obj_adj = bool(rng.random() < 0.5)
        obj_start = len(tokens)
        tokens.append("the")
        labels.append("DET")
        if obj_adj:
            tokens.append(lex.adjectives[int(rng.integers(len(lex.adjectives)))])
            labels.append("ADJ")
        obj_pos = len(tokens)
        tokens.append(lex.noun(obj_i, obj_plural))
        labels.append("NOUN_PL" if obj_plural else "NOUN_SG")
        spans.append((obj_start, len(tokens), "NP"))
        arcs.append((verb_pos, obj_pos, "vo"))

    return tokens, labels, arcs, spans


def _fact_sentence(entity: str, relation: str, obj: str):
    tokens = [entity, relation, obj]
    labels = ["ENT", "REL", "OBJ"]
    arcs = [(0, 1, "sv"), (1, 2, "vo")]
    spans = [(0, 1, "ENT"), (2, 3, "OBJ")]
    return tokens, labels, arcs, spans


def _ordering_sentence(lex: Lexicon, i: int, j: int):
    cmp_token = lex.cmp_before if i < j else lex.cmp_after
    tokens = [lex.order_tokens[i], cmp_token, lex.order_tokens[j]]
    labels = ["ORD", "CMP", "ORD"]
    return tokens, labels, [(0, 1, "sv"), (1, 2, "vo")], []


def _spans_to_bio(length: int, spans) -> list[str]:
    tags = ["O"] * length
    for start, end, span_type in spans:
        tags[start] = f"B-{span_type}"
        for k in range(start + 1, end):
            tags[k] = f"I-{span_type}"
    return tags


# ---------------------------------------------------------------------------
# corpus generation


@dataclass
class SynthCorpus:
    config: SynthLanguageConfig
    sentences: list[list[str]]
    vocab: Vocabulary
    gold_facts: dict[tuple[str, str], str]
    lexicon: Lexicon
    counts: dict[str, int]

    @property
    def sentence_set(self) -> set[str]:
        return {" ".join(s) for s in self.sentences}


def gen_corpus(cfg: SynthLanguageConfig) -> SynthCorpus:
    lex = build_lexicon(cfg)
    vocab = build_vocabulary(lex)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x636f7270]))

    pair_pool = [(e, r) for e in lex.entities for r in lex.relations]
    chosen = rng.choice(len(pair_pool), size=cfg.fact_count, replace=False)
    gold_facts = {
        pair_pool[int(i)]: lex.objects[int(rng.integers(len(lex.objects)))] for i in chosen
    }
    fact_list = sorted(gold_facts.items())

    n_fact = round(cfg.fact_density * cfg.sentence_count)
    n_order = min(round(ORDERING_SENTENCE_RATE * cfg.sentence_count), cfg.sentence_count - n_fact)
    n_agree = cfg.sentence_count - n_fact - n_order

    sentences: list[list[str]] = []
    for _ in range(n_agree):
        tokens, _, _, _ = _agreement_sentence(lex, rng)
        sentences.append(tokens)
    # round-robin over the gold table: every fact surfaces equally often, so
    # the density knob controls frequency rather than presence
    for i in range(n_fact):
        (entity, relation), obj = fact_list[i % len(fact_list)]
        sentences.append(_fact_sentence(entity, relation, obj)[0])
    for _ in range(n_order):
        i, j = _distinct_pair(rng, ORDER_SCALE_SIZE)
        sentences.append(_ordering_sentence(lex, i, j)[0])

    order = rng.permutation(len(sentences))
    sentences = [sentences[int(i)] for i in order]

    counts = {
        "sentences": cfg.sentence_count,
        "fact_sentences": n_fact,
        "ordering_sentences": n_order,
        "agreement_sentences": n_agree,
        "vocab_size": vocab.size,
        "facts": len(gold_facts),
    }
    return SynthCorpus(
        config=cfg, sentences=sentences, vocab=vocab, gold_facts=gold_facts,
        lexicon=lex, counts=counts,
    )


def _distinct_pair(rng: np.random.Generator, n: int) -> tuple[int, int]:
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    return i, j


# ---------------------------------------------------------------------------
# probe suites


@dataclass
class ProbeSuites:
    minimal_pairs: list[dict]
    cloze: list[dict]
    multichoice: list[dict]
    token_label: dict[str, list[dict]]
    segmentation: dict[str, list[dict]]
    arcs: dict[str, list[dict]]
    overlap: dict[str, int]


def _fresh(rng, corpus_set: set[str], make, overlap_counter: list[int]):
    """Sample from `make` until the surface form avoids the corpus, with a
    bounded retry budget; unavoidable overlaps are counted, not hidden."""
    result = make()
    for _ in range(FRESH_SAMPLING_RETRIES):
        if " ".join(result[0]) not in corpus_set:
            return result
        result = make()
    overlap_counter[0] += 1
    return result


def gen_probe_suites(corpus: SynthCorpus, n_minimal_pairs: int = 80, n_multichoice: int = 40) -> ProbeSuites:
    cfg = corpus.config
    lex = corpus.lexicon
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x70726f62]))
    corpus_set = corpus.sentence_set
    overlap: dict[str, int] = {}

    # minimal pairs: flip the verb to the disagreeing number form
    counter = [0]
    pairs = []
    for i in range(n_minimal_pairs):
        tokens, labels, _, _ = _fresh(
            rng, corpus_set, lambda: _agreement_sentence(lex, rng), counter
        )
        verb_pos = next(p for p, lab in enumerate(labels) if lab.startswith("VERB"))
        plural = labels[verb_pos] == "VERB_PL"
        verb_form = tokens[verb_pos]
        stem = verb_form if plural else verb_form[:-1]
        verb_i = lex.verb_stems.index(stem)
        bad = list(tokens)
        bad[verb_pos] = lex.verb(verb_i, not plural)
        pairs.append({"id": f"mp{i:04d}", "good": " ".join(tokens), "bads": [" ".join(bad)]})
    overlap["minimal_pairs"] = counter[0]

    # cloze over every gold fact; completions necessarily live in the corpus,
    # recalling them is the point
    cloze = []
    for i, ((entity, relation), obj) in enumerate(sorted(corpus.gold_facts.items())):
        cloze.append(
            {"id": f"cz{i:04d}", "text": f"{entity} {relation} {MASK_PLACEHOLDER}", "answer": obj}
        )
    overlap["cloze"] = sum(
        1
        for (entity, relation), obj in sorted(corpus.gold_facts.items())
        if f"{entity} {relation} {obj}" in corpus_set
    )

    # multiple choice over the planted rank scale
    multichoice = []
    mc_overlap = 0
    for i in range(n_multichoice):
        a, b = _distinct_pair(rng, ORDER_SCALE_SIZE)
        answer = lex.cmp_before if a < b else lex.cmp_after
        wrong = lex.cmp_after if a < b else lex.cmp_before
        choices = [answer, wrong] if rng.random() < 0.5 else [wrong, answer]
        text = f"{lex.order_tokens[a]} {MASK_PLACEHOLDER} {lex.order_tokens[b]}"
        completed = text.replace(MASK_PLACEHOLDER, answer)
        if completed in corpus_set:
            mc_overlap += 1
        multichoice.append(
            {"id": f"mc{i:04d}", "text": text, "choices": choices,
             "answer_idx": choices.index(answer)}
        )
    overlap["multichoice"] = mc_overlap

    # structural suites with train/dev/test splits
    def labelled_sentence():
        draw = rng.random()
        if draw < 0.7:
            return _agreement_sentence(lex, rng)
        if draw < 0.9:
            entity = lex.entities[int(rng.integers(len(lex.entities)))]
            relation = lex.relations[int(rng.integers(len(lex.relations)))]
            obj = lex.objects[int(rng.integers(len(lex.objects)))]
            return _fact_sentence(entity, relation, obj)
        i, j = _distinct_pair(rng, ORDER_SCALE_SIZE)
        return _ordering_sentence(lex, i, j)

    token_label: dict[str, list[dict]] = {}
    segmentation: dict[str, list[dict]] = {}
    arcs: dict[str, list[dict]] = {}
    tl_counter = [0]
    seg_counter = [0]
    arc_counter = [0]
    for split, size in SPLIT_SIZES.items():
        tl_rows = []
        seg_rows = []
        arc_rows = []
        for _ in range(size):
            tokens, labels, _, _ = _fresh(rng, corpus_set, labelled_sentence, tl_counter)
            tl_rows.append({"tokens": tokens, "labels": labels})

            tokens, _, _, spans = _fresh(
                rng, corpus_set, lambda: _agreement_sentence(lex, rng), seg_counter
            )
            seg_rows.append({"tokens": tokens, "labels": _spans_to_bio(len(tokens), spans)})

            tokens, _, sentence_arcs, _ = _fresh(
                rng, corpus_set, lambda: _agreement_sentence(lex, rng, transitive=True), arc_counter
            )
            arc_rows.append(
                {"tokens": tokens, "arcs": [[h, d, lab] for h, d, lab in sentence_arcs]}
            )
        token_label[split] = tl_rows
        segmentation[split] = seg_rows
        arcs[split] = arc_rows
    overlap["token_label"] = tl_counter[0]
    overlap["segmentation"] = seg_counter[0]
    overlap["arcs"] = arc_counter[0]

    total_overlap = sum(overlap.values()) - overlap["cloze"] - overlap["multichoice"]
    if total_overlap > 0:
        warnings.warn(
            f"{total_overlap} probe items could not avoid verbatim corpus overlap "
            "(lexicon too small); counts recorded in the manifest",
            stacklevel=2,
        )

    return ProbeSuites(
        minimal_pairs=pairs,
        cloze=cloze,
        multichoice=multichoice,
        token_label=token_label,
        segmentation=segmentation,
        arcs=arcs,
        overlap=overlap,
    )


# ---------------------------------------------------------------------------
# file emission


def write_synth_outputs(out_dir, corpus: SynthCorpus, suites: ProbeSuites) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    probes_dir = out_dir / "probes"
    probes_dir.mkdir(exist_ok=True)

    (out_dir / "corpus.txt").write_text(
        "\n".join(" ".join(s) for s in corpus.sentences) + "\n", encoding="utf-8"
    )
    corpus.vocab.to_file(out_dir / "vocab.txt")
    fact_lines = [f"{e}\t{r}\t{o}" for (e, r), o in sorted(corpus.gold_facts.items())]
    (out_dir / "facts.tsv").write_text("\n".join(fact_lines) + "\n", encoding="utf-8")

    dump_jsonl(probes_dir / "minimal_pairs.jsonl", suites.minimal_pairs)
    dump_jsonl(probes_dir / "cloze.jsonl", suites.cloze)
    dump_jsonl(probes_dir / "multichoice.jsonl", suites.multichoice)
    for name, splits in (
        ("token_label", suites.token_label),
        ("segmentation", suites.segmentation),
        ("arcs", suites.arcs),
    ):
        for split, rows in splits.items():
            dump_jsonl(probes_dir / f"{name}.{split}.jsonl", rows)

    manifest = {
        "config": asdict(corpus.config),
        "seed": corpus.config.seed,
        "counts": corpus.counts,
        "suites": {
            "minimal_pairs": {"items": len(suites.minimal_pairs)},
            "cloze": {"items": len(suites.cloze)},
            "multichoice": {"items": len(suites.multichoice)},
            "token_label": {split: len(rows) for split, rows in suites.token_label.items()},
            "segmentation": {split: len(rows) for split, rows in suites.segmentation.items()},
            "arcs": {split: len(rows) for split, rows in suites.arcs.items()},
        },
        "corpus_overlap": suites.overlap,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
