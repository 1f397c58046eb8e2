"""Grammar-constrained decoding of model programs."""

from .generators import (
    HOSTILE_STATEMENT,
    PROMPT_TEMPLATE,
    BuiltinGrammarSampler,
    CandidateGenerator,
    FragmentContext,
    FragmentGenerator,
    GeneratorError,
    HttpGenerator,
    MockGenerator,
    StatementView,
    TokenContext,
    clean_completion,
    render_prompt,
    response_columns,
    variable_info,
)
from .masking import DeadEnd, apply_mask, build_mask
from .session import (
    LIKELIHOOD,
    DecodeError,
    DecoderConfig,
    DecodeSession,
    DecodeStats,
    data_decls_for,
    decode_block,
    generate_likelihood,
    generate_prior,
    generate_program,
    sample_statement,
)

__all__ = [
    "HOSTILE_STATEMENT", "PROMPT_TEMPLATE", "BuiltinGrammarSampler", "CandidateGenerator",
    "FragmentContext", "FragmentGenerator", "GeneratorError", "HttpGenerator", "MockGenerator",
    "StatementView", "TokenContext", "clean_completion", "render_prompt", "response_columns",
    "variable_info", "DeadEnd", "apply_mask", "build_mask", "LIKELIHOOD", "DecodeError",
    "DecoderConfig", "DecodeSession", "DecodeStats", "data_decls_for", "decode_block",
    "generate_likelihood", "generate_prior", "generate_program", "sample_statement",
]
