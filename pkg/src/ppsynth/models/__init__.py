"""Reference programs for the builtin datasets."""

from importlib import resources

REFERENCE_MODELS = {
    "eight_schools": "eight_schools.ppl",
    "eight_schools_centered": "eight_schools_centered.ppl",
    "dugongs": "dugongs.ppl",
    "surgical": "surgical.ppl",
    "peregrine": "peregrine.ppl",
    "gp": "gp.ppl",
}


def reference_path(name: str):
    if name not in REFERENCE_MODELS:
        raise KeyError(f"no reference model named {name!r}")
    return resources.files(__name__) / REFERENCE_MODELS[name]


def reference_source(name: str) -> str:
    return reference_path(name).read_text(encoding="utf-8")
