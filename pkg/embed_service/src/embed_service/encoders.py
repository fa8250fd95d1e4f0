"""Encoder backends for the embedding service.

Two kinds: a real multilingual sentence-transformer selected by model name,
and a dependency-free deterministic encoder (`toy://`) for offline runs and
contract tests. The toy encoder hashes lexicon-normalized tokens, so a small
built-in vocabulary is genuinely aligned across English, Spanish, German,
and French; everything else falls back to surface tokens.
"""
from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np

DEFAULT_MODEL = "sentence-transformers/distiluse-base-multilingual-cased-v2"
TOY_PREFIX = "toy://"


class EncoderError(RuntimeError):
    """Encoder backend could not be loaded."""


class Encoder(Protocol):
    name: str
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


# concept -> surface forms in en/es/de/fr (lowercased)
_LEXICON_ROWS = {
    "president": ["president", "presidente", "präsident", "président"],
    "parliament": ["parliament", "parlamento", "parlament", "parlement"],
    "government": ["government", "gobierno", "regierung", "gouvernement"],
    "minister": ["minister", "ministro", "ministra", "ministre"],
    "election": ["election", "elección", "elecciones", "wahl", "élection"],
    "vote": ["vote", "voto", "stimme", "scrutin"],
    "law": ["law", "ley", "gesetz", "loi"],
    "court": ["court", "tribunal", "gericht"],
    "police": ["police", "policía", "polizei"],
    "attack": ["attack", "ataque", "angriff", "attaque"],
    "war": ["war", "guerra", "krieg", "guerre"],
    "peace": ["peace", "paz", "frieden", "paix"],
    "crisis": ["crisis", "krise", "crise"],
    "economy": ["economy", "economía", "wirtschaft", "économie"],
    "market": ["market", "mercado", "markt", "marché"],
    "bank": ["bank", "banco", "banque"],
    "money": ["money", "dinero", "geld", "argent"],
    "strike": ["strike", "huelga", "streik", "grève"],
    "protest": ["protest", "protesta", "manifestation"],
    "fire": ["fire", "fuego", "incendio", "feuer", "feu", "incendie"],
    "earthquake": ["earthquake", "terremoto", "erdbeben", "séisme"],
    "storm": ["storm", "tormenta", "sturm", "tempête"],
    "flood": ["flood", "inundación", "flut", "inondation"],
    "virus": ["virus"],
    "hospital": ["hospital", "krankenhaus", "hôpital"],
    "school": ["school", "escuela", "schule", "école"],
    "city": ["city", "ciudad", "stadt", "ville"],
    "country": ["country", "país", "land", "pays"],
    "people": ["people", "gente", "leute", "gens"],
    "speak": ["speak", "spoke", "hablar", "habló", "sprechen", "sprach",
              "parler", "parlé", "parla"],
    "meet": ["meet", "met", "reunión", "reunió", "treffen", "traf",
             "rencontre", "rencontré"],
    "new": ["new", "nuevo", "nueva", "neu", "nouveau", "nouvelle"],
    "year": ["year", "año", "jahr", "année", "an"],
    "day": ["day", "día", "tag", "jour"],
    "world": ["world", "mundo", "welt", "monde"],
    "news": ["news", "noticias", "nachrichten", "nouvelles"],
    "team": ["team", "equipo", "mannschaft", "équipe"],
    "game": ["game", "match", "partido", "spiel"],
    "win": ["win", "won", "ganó", "ganar", "gewann", "gewinnen", "gagné"],
    "champion": ["champion", "campeón", "meister"],
}

_WORD_TO_CONCEPT = {
    word: concept for concept, words in _LEXICON_ROWS.items() for word in words
}


def _tokens(text: str) -> list[str]:
    out = []
    word = []
    for ch in text.lower():
        if ch.isalpha():
            word.append(ch)
        elif word:
            out.append("".join(word))
            word = []
    if word:
        out.append("".join(word))
    return out


def _bucket(feature: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "little")
    sign = 1.0 if value & 1 else -1.0
    return (value >> 1) % dim, sign


class ToyMultilingualEncoder:
    """Deterministic hashed bag-of-features encoder for offline use.

    Lexicon hits contribute shared concept features (double weight), so
    translations of covered vocabulary land near each other; all tokens
    also contribute surface features.
    """

    def __init__(self, dim: int = 512):
        if dim < 8:
            raise EncoderError(f"toy encoder dim must be >= 8, got {dim}")
        self.dim = dim
        self.name = f"toy-multilingual-{dim}"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in _tokens(text):
                idx, sign = _bucket("w:" + token, self.dim)
                out[row, idx] += sign
                concept = _WORD_TO_CONCEPT.get(token)
                if concept is not None:
                    idx, sign = _bucket("c:" + concept, self.dim)
                    out[row, idx] += 2.0 * sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class SentenceTransformerEncoder:
    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(
                "sentence-transformers is not installed; install the 'real' extra"
            ) from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise EncoderError(f"cannot load model {model_name!r}: {exc}") from exc
        self.name = model_name
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        return np.asarray(
            self._model.encode(list(texts), convert_to_numpy=True), dtype=np.float64
        )


def load_encoder(spec: str) -> Encoder:
    """Build an encoder from a spec string.

    `toy://dim=512` selects the offline encoder; anything else is treated
    as a sentence-transformers model name.
    """
    if spec.startswith(TOY_PREFIX):
        rest = spec[len(TOY_PREFIX):]
        dim = 512
        if rest:
            key, _, value = rest.partition("=")
            if key != "dim" or not value.isdigit():
                raise EncoderError(f"bad toy encoder spec {spec!r}, want toy://dim=N")
            dim = int(value)
        return ToyMultilingualEncoder(dim=dim)
    return SentenceTransformerEncoder(spec)
