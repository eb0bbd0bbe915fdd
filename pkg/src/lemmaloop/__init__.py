"""Wake-sleep lemma library learning for LLM-driven formal theorem proving."""

__version__ = "0.1.0"
