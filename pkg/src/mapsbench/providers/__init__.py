from .base import (
    ChatProvider,
    CompletionResult,
    Decoding,
    ProtocolError,
    ProviderError,
    ScriptExhausted,
    UsageLedger,
    record_usage,
)
from .openai_compat import OpenAICompatProvider, ProviderConfig
from .scripted import Invocation, ScriptedProvider, ScriptedReply, SimulatedProvider

__all__ = [
    "ChatProvider",
    "CompletionResult",
    "Decoding",
    "Invocation",
    "OpenAICompatProvider",
    "ProtocolError",
    "ProviderConfig",
    "ProviderError",
    "ScriptExhausted",
    "ScriptedProvider",
    "ScriptedReply",
    "SimulatedProvider",
    "UsageLedger",
    "record_usage",
]
