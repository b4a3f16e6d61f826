import pytest

from vtinv.synth import SynthSpec, generate_corpus, generate_records

# small corpus shared across pipeline/CLI tests: 12 sequences keep the
# 80/10/10 split non-empty while training stays fast
SMALL_SPEC = SynthSpec(
    n_sequences=12, frames_per_sequence=40, inventory_size=6,
    seed=5, sequences_per_session=6,
)


@pytest.fixture(scope="session")
def small_records():
    return generate_records(SMALL_SPEC)


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus") / "small"
    generate_corpus(SMALL_SPEC, str(root))
    return str(root)
