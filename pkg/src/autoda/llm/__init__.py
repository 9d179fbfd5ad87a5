"""Program generators: chat-model backed and an offline mock."""

from .client import (
    DEFAULT_MODEL, EmptyCompletion, LlmClient, LlmConfig, LlmGenerator, extract_program,
    request_body, request_program,
)
from .mock import BANK, MockGenerator, mock_generator, splice
from .prompts import (
    CROSSOVER, GRAMMAR_REFERENCE, INITIALIZATION, MUTATION, PromptTemplate,
    render_crossover_prompt, render_initialization_prompt, render_mutation_prompt,
)
