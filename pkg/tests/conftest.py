import numpy as np
import pytest

from lexrag.embedding import HashEmbedder


class PlantedEmbedder:
    """Test embedder returning preset vectors for known texts.

    Lets tests construct corpora with exactly known similarities; unknown
    texts fall back to a hash embedder of the same dimension.
    """

    deterministic = True

    def __init__(self, dim, planted=None, seed=99):
        self.dim = dim
        self.name = f"planted-{dim}"
        self.planted = dict(planted or {})
        self._fallback = HashEmbedder(dim=dim, seed=seed)

    def plant(self, text, vector):
        vector = np.asarray(vector, dtype=np.float64)
        assert vector.shape == (self.dim,)
        self.planted[text] = vector

    def embed(self, text):
        if text in self.planted:
            return np.array(self.planted[text], dtype=np.float64)
        return self._fallback.embed(text)


@pytest.fixture
def hash_embedder():
    return HashEmbedder(dim=256, ngram=3, seed=13)


@pytest.fixture
def planted_embedder():
    return PlantedEmbedder(dim=8)


FIXTURE_DOCS = [
    {
        "id": "doc-contract-law",
        "title": "Contract Law Basics",
        "text": (
            "Statute X applies to Contract Law. A contract requires offer and acceptance. "
            "Consideration must be present for a contract to bind. "
            "Breach of contract entitles the injured party to damages."
        ),
        "tags": ["contract"],
    },
    {
        "id": "doc-precedent",
        "title": "Precedent Cases for Statute X",
        "text": (
            "Case Alpha versus Beta applied Statute X in a contract dispute. "
            "The court held that Statute X governs commercial agreements. "
            "Precedent cases support the application of Statute X in contract disputes."
        ),
        "tags": ["precedent", "contract"],
    },
    {
        "id": "doc-employment",
        "title": "Employment Law Overview",
        "text": (
            "Employment Law covers dismissal and workplace rights. "
            "An employee may claim unfair dismissal after qualifying service. "
            "Statute Y applies to Employment Law."
        ),
        "tags": ["employment"],
    },
    {
        "id": "doc-privacy",
        "title": "Privacy Regulation Notes",
        "text": (
            "Privacy Regulation restricts processing of personal data. "
            "Consent must be freely given and informed. "
            "Data controllers carry the burden of proof."
        ),
        "tags": ["privacy"],
    },
]

FIXTURE_GAZETTEER = [
    {"entity_id": "E_STATUTE_X", "aliases": ["Statute X"]},
    {"entity_id": "E_STATUTE_Y", "aliases": ["Statute Y"]},
    {"entity_id": "E_CONTRACT_LAW", "aliases": ["Contract Law", "law of contracts"]},
    {"entity_id": "E_EMPLOYMENT_LAW", "aliases": ["Employment Law"]},
    {"entity_id": "E_PRIVACY_REG", "aliases": ["Privacy Regulation"]},
    {"entity_id": "E_CASE_ALPHA_BETA", "aliases": ["Case Alpha versus Beta", "Alpha v Beta"]},
]

FIXTURE_TRIPLES = [
    ("E_STATUTE_X", "applies_to", "E_CONTRACT_LAW"),
    ("E_STATUTE_Y", "applies_to", "E_EMPLOYMENT_LAW"),
    ("E_CASE_ALPHA_BETA", "cites", "E_STATUTE_X"),
    ("E_CASE_ALPHA_BETA", "related_to", "E_CONTRACT_LAW"),
    ("E_PRIVACY_REG", "related_to", "E_EMPLOYMENT_LAW"),
]


@pytest.fixture
def fixture_docs():
    return [dict(d) for d in FIXTURE_DOCS]


@pytest.fixture
def fixture_gazetteer():
    return [dict(g) for g in FIXTURE_GAZETTEER]


@pytest.fixture
def fixture_triples():
    return list(FIXTURE_TRIPLES)
