import numpy as np
import pytest

from probetime.backend import (
    CAP_MASKED_LM,
    CAP_REPRESENTATIONS,
    LayerRepresentations,
    MaskedDistribution,
    ScoringBackend,
    ToyMLMBackend,
    ToyMLMConfig,
    Vocabulary,
    checksum_arrays,
    init_params,
)
from probetime.backend.training import pretrain_toy


class UniformBackend(ScoringBackend):
    """Every masked distribution is exactly uniform over the vocabulary."""

    capabilities = frozenset({CAP_MASKED_LM})

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    @property
    def num_layers(self):
        return 0

    @property
    def d_model(self):
        return 1

    def score_masked(self, token_ids, masked_positions):
        v = self.vocab.size
        probs = np.full(v, 1.0 / v)
        return [MaskedDistribution(position=int(p), probs=probs.copy()) for p in masked_positions]

    def encode(self, token_ids):
        raise NotImplementedError

    def state_checksum(self):
        return "uniform"


class TableBackend(ScoringBackend):
    """Masked distributions read from a fixed per-token-id probability table;
    the distribution depends only on the token left of the mask (or the
    first token), which makes expected outcomes easy to enumerate."""

    capabilities = frozenset({CAP_MASKED_LM})

    def __init__(self, vocab: Vocabulary, table: np.ndarray):
        self.vocab = vocab
        self.table = np.asarray(table, dtype=np.float64)

    @property
    def num_layers(self):
        return 0

    @property
    def d_model(self):
        return 1

    def _context_key(self, token_ids, position):
        return token_ids[position - 1] if position > 0 else token_ids[0]

    def score_masked(self, token_ids, masked_positions):
        out = []
        for p in masked_positions:
            row = self.table[self._context_key(list(token_ids), int(p))]
            out.append(MaskedDistribution(position=int(p), probs=row))
        return out

    def encode(self, token_ids):
        raise NotImplementedError

    def state_checksum(self):
        return checksum_arrays([("table", self.table)])


class StackBackend(ScoringBackend):
    """Representation-only backend serving preset layer stacks per token id."""

    capabilities = frozenset({CAP_REPRESENTATIONS})

    def __init__(self, vocab: Vocabulary, layer_table: np.ndarray):
        # layer_table: (L+1, V, d)
        self.vocab = vocab
        self.layer_table = np.asarray(layer_table, dtype=np.float64)

    @property
    def num_layers(self):
        return self.layer_table.shape[0] - 1

    @property
    def d_model(self):
        return self.layer_table.shape[2]

    def score_masked(self, token_ids, masked_positions):
        from probetime.errors import CapabilityError

        raise CapabilityError("representation-only stub")

    def encode(self, token_ids):
        ids = [int(t) for t in token_ids]
        return LayerRepresentations(layers=self.layer_table[:, ids, :])

    def state_checksum(self):
        return checksum_arrays([("layer_table", self.layer_table)])


@pytest.fixture(scope="session")
def small_vocab() -> Vocabulary:
    return Vocabulary.from_tokens(["[PAD]", "[MASK]", "aa", "bb", "cc", "dd", "ee", "ff"])


@pytest.fixture(scope="session")
def tiny_config(small_vocab) -> ToyMLMConfig:
    return ToyMLMConfig(
        V=small_vocab.size, d_model=8, n_layers=1, n_heads=2, ffn_dim=16,
        max_seq_len=8, batch_size=4, total_steps=100, warmup_steps=10,
        peak_lr=2e-3, seed=5, checkpoint_schedule=(0, 100),
    )


@pytest.fixture(scope="session")
def random_init_backend(small_vocab, tiny_config) -> ToyMLMBackend:
    return ToyMLMBackend(init_params(tiny_config), tiny_config, small_vocab)


@pytest.fixture(scope="session")
def trained_tiny(tmp_path_factory, small_vocab):
    """A small model overfitted on a handful of sentences; enough contextual
    structure for oracle comparisons without slowing the suite down."""
    cfg = ToyMLMConfig(
        V=small_vocab.size, d_model=16, n_layers=2, n_heads=2, ffn_dim=32,
        max_seq_len=8, batch_size=8, total_steps=600, warmup_steps=30,
        peak_lr=2e-3, seed=17, checkpoint_schedule=(0, 600),
    )
    corpus = (
        [["aa", "bb", "cc"]] * 10
        + [["bb", "cc", "dd"]] * 10
        + [["cc", "dd", "ee"]] * 10
        + [["dd", "ee", "ff"]] * 10
        + [["ee", "ff", "aa"]] * 10
    )
    root = tmp_path_factory.mktemp("trained_tiny")
    refs, _ = pretrain_toy(cfg, corpus, small_vocab, root, "tiny")
    backend = ToyMLMBackend.load(root / "tiny" / f"step_{cfg.total_steps}", small_vocab)
    return backend
