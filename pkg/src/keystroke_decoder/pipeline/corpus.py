from __future__ import annotations

from typing import List, Tuple

import numpy as np

from ..domain.errors import ParameterError

# Declarative sentences without diacritics, built from determiners, nouns,
# adjectives, prepositions and verbs.
_NOUNS_M = (
    "gato", "perro", "libro", "sistema", "proceso", "beneficio", "riesgo", "numero", "procesador",
    "cambio", "estudio", "camino", "mercado", "gobierno", "paciente", "profesor", "museo", "equipo",
    "resultado", "sonido", "barco", "metodo", "jardin", "animal", "abogado", "alumno", "arbol", "banco",
    "bosque", "campo", "castillo", "coche", "cuerpo", "desarrollo", "documento", "edificio", "ejercicio",
    "espacio", "grupo", "hospital", "hotel", "idioma", "invierno", "mensaje", "modelo", "motor", "papel",
    "pueblo", "puerto", "rio", "secreto", "sector", "tiempo", "trabajo", "viaje", "vecino", "lenguaje",
    "medico", "dinero", "premio", "programa", "plan",
)
_NOUNS_F = (
    "silla", "idea", "vision", "ciencia", "teoria", "lesion", "instruccion", "casa", "ciudad", "mesa",
    "musica", "empresa", "politica", "estadistica", "distribucion", "presencia", "historia", "escuela",
    "respuesta", "energia", "ventana", "cultura", "agencia", "biblioteca", "calle", "camara", "carta",
    "clase", "comida", "estrella", "familia", "fuente", "guerra", "iglesia", "imagen", "isla",
    "lengua", "maquina", "memoria", "montana", "noticia", "oficina", "pelicula", "piedra", "playa",
    "pregunta", "red", "region", "revista", "semana", "sociedad", "tarea", "tienda", "universidad",
    "ley", "novela", "carrera",
)
_ADJECTIVES = (
    "nuevo", "antiguo", "rapido", "pequeno", "grande", "importante", "moderno", "largo", "claro",
    "fuerte", "simple", "comun", "util", "social", "publico", "blanco", "oscuro", "alto", "bajo", "barato",
    "bonito", "caro", "central", "corto", "directo", "extrano", "famoso", "fresco", "frio", "general",
    "limpio", "lleno", "negro", "nacional", "natural", "normal", "peligroso", "perfecto", "popular",
    "principal", "rico", "rojo", "seguro", "solo", "tranquilo", "verde", "viejo",
)
_VERBS = (
    ("rompe", "rompen"), ("ocasiona", "ocasionan"), ("supera", "superan"), ("reduce", "reducen"),
    ("sigue", "siguen"), ("impone", "imponen"), ("ejecuta", "ejecutan"), ("exige", "exigen"),
    ("cambia", "cambian"), ("mejora", "mejoran"), ("explica", "explican"), ("protege", "protegen"),
    ("genera", "generan"), ("describe", "describen"), ("aumenta", "aumentan"), ("revisa", "revisan"),
    ("busca", "buscan"), ("compra", "compran"), ("construye", "construyen"), ("controla", "controlan"),
    ("crea", "crean"), ("defiende", "defienden"), ("destruye", "destruyen"), ("encuentra", "encuentran"),
    ("escribe", "escriben"), ("espera", "esperan"), ("estudia", "estudian"), ("evita", "evitan"),
    ("lleva", "llevan"), ("mira", "miran"), ("necesita", "necesitan"), ("organiza", "organizan"),
    ("presenta", "presentan"), ("recibe", "reciben"), ("recuerda", "recuerdan"), ("vende", "venden"),
)
_PREPOSITIONS = ("de", "en", "con", "sin", "para", "sobre", "entre")
_DETERMINERS = {
    ("m", False): ("el", "un"), ("f", False): ("la", "una"),
    ("m", True): ("los", "unos"), ("f", True): ("las", "unas"),
}

# templates over noun phrases (NP), optional adjectives (ADJ), verbs (V) and prepositions (P)
_TEMPLATES = (
    ("NP", "V", "NP"),
    ("NP", "ADJ", "V", "NP"),
    ("NP", "V", "NP", "ADJ"),
    ("NP", "ADJ", "V", "NP", "ADJ"),
    ("NP", "V", "NP", "P", "NP"),
    ("NP", "P", "NP", "V", "NP"),
    ("NP", "ADJ", "V", "NP", "P", "NP"),
)

Tagged = List[Tuple[str, str]]


def _plural(word: str) -> str:
    return word + ("s" if word[-1] in "aeiou" else "es")


def _adjective(word: str, gender: str, plural: bool) -> str:
    if gender == "f" and word.endswith("o"):
        word = word[:-1] + "a"
    return _plural(word) if plural else word


def _tagged_sentence(rng: np.random.Generator) -> Tagged:
    template = _TEMPLATES[rng.integers(len(_TEMPLATES))]
    words: Tagged = []
    subject_plural = None
    last_np = ("m", False)
    for slot in template:
        if slot == "NP":
            gender = "m" if rng.random() < 0.5 else "f"
            plural = bool(rng.random() < 0.4)
            nouns = _NOUNS_M if gender == "m" else _NOUNS_F
            noun = nouns[rng.integers(len(nouns))]
            det = _DETERMINERS[(gender, plural)][int(rng.random() < 0.25)]
            words += [(det, "DET"), (_plural(noun) if plural else noun, "NOUN")]
            if subject_plural is None:
                subject_plural = plural
            last_np = (gender, plural)
        elif slot == "ADJ":
            adj = _ADJECTIVES[rng.integers(len(_ADJECTIVES))]
            words.append((_adjective(adj, *last_np), "ADJ"))
        elif slot == "V":
            verb = _VERBS[rng.integers(len(_VERBS))]
            words.append((verb[1] if subject_plural else verb[0], "VERB"))
        else:
            words.append((_PREPOSITIONS[rng.integers(len(_PREPOSITIONS))], "ADP"))
    return words


def generate_tagged_sentences(n: int, seed: int, min_words: int = 5, max_words: int = 8) -> List[Tagged]:
    """`n` unique sentences of min_words..max_words words with part-of-speech tags."""
    if n < 1:
        raise ParameterError("n must be >= 1.")
    rng = np.random.default_rng(seed)
    seen, out = set(), []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n:
            raise ParameterError(f"Could not draw {n} unique sentences with {min_words}-{max_words} words.")
        tagged = _tagged_sentence(rng)
        text = " ".join(w for w, _ in tagged)
        if not min_words <= len(tagged) <= max_words or text in seen:
            continue
        seen.add(text)
        out.append(tagged)
    return out


def generate_sentences(n: int, seed: int, min_words: int = 5, max_words: int = 8) -> List[str]:
    return [" ".join(w for w, _ in s) for s in generate_tagged_sentences(n, seed, min_words, max_words)]


def generate_corpus(n_chars: int, seed: int) -> str:
    """Language-model training text, one sentence per line (duplicates allowed)."""
    rng = np.random.default_rng(seed)
    lines, total = [], 0
    while total < n_chars:
        line = " ".join(w for w, _ in _tagged_sentence(rng))
        lines.append(line)
        total += len(line) + 1
    return "\n".join(lines) + "\n"


def pos_lexicon() -> dict:
    """word -> part-of-speech tag for every word form the generator can emit."""
    lexicon = {}
    for gender, plural in _DETERMINERS:
        for det in _DETERMINERS[(gender, plural)]:
            lexicon[det] = "DET"
        for adj in _ADJECTIVES:
            lexicon[_adjective(adj, gender, plural)] = "ADJ"
    for noun in _NOUNS_M + _NOUNS_F:
        lexicon[noun] = lexicon[_plural(noun)] = "NOUN"
    for sg, pl in _VERBS:
        lexicon[sg] = lexicon[pl] = "VERB"
    for p in _PREPOSITIONS:
        lexicon[p] = "ADP"
    return lexicon
