import numpy as np
import pytest

from probetime.backend import Vocabulary
from probetime.baselines import (
    BaselineSpec,
    parse_embedding_table,
    random_guess_accuracy,
    random_vector_backend,
    static_embedding_backend,
)
from probetime.core import ProbeTaskSpec
from probetime.errors import CapabilityError, ConfigError, ContractViolation, ParseError
from probetime.probes import ClozeItem, MinimalPairItem, MultiChoiceItem


@pytest.fixture
def vocab():
    return Vocabulary.from_tokens(["[PAD]", "[MASK]"] + [f"w{i}" for i in range(8)])


class TestBaselineSpec:
    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            BaselineSpec(kind="wishful_thinking")

    def test_required_params(self):
        with pytest.raises(ConfigError):
            BaselineSpec(kind="static_embedding")
        BaselineSpec(kind="static_embedding", params={"table": "x.txt"})


class TestRandomGuess:
    def test_four_choices_quarter(self):
        spec = ProbeTaskSpec("mc", "multichoice", "x")
        items = [
            MultiChoiceItem(id=str(i), tokens=("a", "[MASK]"),
                            choices=("a", "b", "c", "d"), answer_index=0)
            for i in range(6)
        ]
        assert random_guess_accuracy(spec, items) == pytest.approx(0.25)

    def test_minimal_pairs_single_bad_half(self):
        spec = ProbeTaskSpec("mp", "minimal_pair", "x")
        items = [MinimalPairItem(id="1", good=("a",), bads=(("b",),))]
        assert random_guess_accuracy(spec, items) == pytest.approx(0.5)

    def test_mixed_choice_counts_expectation(self):
        spec = ProbeTaskSpec("mc", "multichoice", "x")
        items = [
            MultiChoiceItem(id="1", tokens=("a", "[MASK]"), choices=("a", "b"), answer_index=0),
            MultiChoiceItem(id="2", tokens=("a", "[MASK]"),
                            choices=("a", "b", "c", "d", "e"), answer_index=0),
        ]
        assert random_guess_accuracy(spec, items) == pytest.approx(0.35)  # (1/2 + 1/5) / 2

    def test_cloze_full_pool_k_over_v(self):
        spec = ProbeTaskSpec("cz", "cloze", "x", params={"k": 3})
        items = [ClozeItem(id="1", tokens=("a", "[MASK]"), answer="b")]
        assert random_guess_accuracy(spec, items, vocab_size=100) == pytest.approx(3 / 100)
        with pytest.raises(ContractViolation):
            random_guess_accuracy(spec, items)  # vocab size required for full pool

    def test_cloze_candidates_pool(self):
        spec = ProbeTaskSpec("cz", "cloze", "x")
        items = [
            ClozeItem(id="1", tokens=("a", "[MASK]"), answer="b", candidates=("b", "c", "d", "e"))
        ]
        assert random_guess_accuracy(spec, items) == pytest.approx(0.25)

    def test_token_label_uses_label_set_size(self):
        from probetime.probes import TokenLabelSentence

        spec = ProbeTaskSpec("tl", "token_label", "x")
        items = [TokenLabelSentence(tokens=("a", "b"), labels=("X", "Y"))]
        assert random_guess_accuracy(spec, items) == pytest.approx(0.5)
        assert random_guess_accuracy(spec, items, n_labels=4) == pytest.approx(0.25)

    def test_arc_pred_balanced_half(self):
        spec = ProbeTaskSpec("ap", "arc_pred", "x")
        assert random_guess_accuracy(spec, [object()]) == 0.5


class TestRandomVectorBackend:
    def test_deterministic_by_seed(self, vocab):
        a = random_vector_backend(vocab, d=16, seed=3)
        b = random_vector_backend(vocab, d=16, seed=3)
        assert np.array_equal(a.table, b.table)
        c = random_vector_backend(vocab, d=16, seed=4)
        assert not np.array_equal(a.table, c.table)

    def test_components_within_range(self, vocab):
        backend = random_vector_backend(vocab, d=300, seed=0)
        assert np.all(backend.table >= -2.0)
        assert np.all(backend.table <= 2.0)

    def test_empirical_mean_near_zero(self):
        big_vocab = Vocabulary.from_tokens(
            ["[PAD]", "[MASK]"] + [f"t{i}" for i in range(1000)]
        )
        backend = random_vector_backend(big_vocab, d=100, seed=1)
        assert backend.table.size >= 10**5
        assert abs(float(backend.table.mean())) <= 0.02

    def test_exposes_single_layer(self, vocab):
        backend = random_vector_backend(vocab, d=8, seed=0)
        reps = backend.encode([2, 3, 4])
        assert reps.layers.shape == (1, 3, 8)
        assert backend.num_layers == 0

    def test_behavioral_use_raises_capability_error(self, vocab):
        backend = random_vector_backend(vocab, d=8, seed=0)
        with pytest.raises(CapabilityError):
            backend.score_masked([vocab.mask_id], [0])


class TestStaticEmbeddingBackend:
    def test_lookup_identity(self, vocab, tmp_path):
        rng = np.random.default_rng(5)
        vectors = {t: rng.normal(size=4) for t in vocab.tokens}
        lines = [f"{t} " + " ".join(f"{x:.8f}" for x in v) for t, v in vectors.items()]
        table = tmp_path / "emb.txt"
        table.write_text("\n".join(lines) + "\n")
        backend = static_embedding_backend(table, vocab)
        reps = backend.encode([vocab.id("w3"), vocab.id("w5")])
        assert np.allclose(reps.layers[0, 0], [float(f"{x:.8f}") for x in vectors["w3"]])
        assert backend.missing_count == 0

    def test_missing_word_zero_vector_counted(self, vocab, tmp_path):
        table = tmp_path / "emb.txt"
        table.write_text("w0 1.0 2.0\nw1 3.0 4.0\n")
        backend = static_embedding_backend(table, vocab)
        assert backend.missing_count == vocab.size - 2
        reps = backend.encode([vocab.id("w7")])
        assert np.all(reps.layers[0, 0] == 0.0)

    def test_malformed_table_is_parse_error(self, tmp_path):
        table = tmp_path / "emb.txt"
        table.write_text("w0 1.0 2.0\nw1 3.0\n")  # ragged dimensions
        with pytest.raises(ParseError):
            parse_embedding_table(table)
        table.write_text("loner\n")
        with pytest.raises(ParseError):
            parse_embedding_table(table)
        table.write_text("w0 1.0\nw0 2.0\n")  # duplicate word
        with pytest.raises(ParseError):
            parse_embedding_table(table)

    def test_no_masked_lm_capability(self, vocab, tmp_path):
        table = tmp_path / "emb.txt"
        table.write_text("w0 1.0 2.0\n")
        backend = static_embedding_backend(table, vocab)
        with pytest.raises(CapabilityError):
            backend.score_masked([vocab.mask_id], [0])


class TestReferenceEval:
    def test_reference_tagged_and_identical_to_direct_eval(self, vocab):
        from conftest import UniformBackend
        from probetime.baselines import reference_eval
        from probetime.probes import eval_multichoice

        backend = UniformBackend(vocab)
        spec = ProbeTaskSpec("mc", "multichoice", "x")
        items = [
            MultiChoiceItem(id="1", tokens=("w0", "[MASK]"), choices=("w1", "w2"), answer_index=0)
        ]

        def evaluate(task, data, be, checkpoint_step):
            return eval_multichoice(
                data, be, task_id=task.task_id, checkpoint_step=checkpoint_step
            )

        records = reference_eval([spec], {"mc": items}, backend, evaluate, reference_step=500)
        assert len(records) == 1
        tag, record = records[0]
        assert tag == "reference"
        assert record.checkpoint_step == 500
        direct = evaluate(spec, items, backend, 500)
        assert record.metric_value == direct.metric_value
