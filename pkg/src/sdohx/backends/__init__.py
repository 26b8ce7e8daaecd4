from .base import (
    Backend,
    BackendError,
    DecodeParams,
    ModelResponse,
    PromptRequest,
    RateLimiter,
    RequestError,
    TokenUsage,
    TransportError,
    request_cache_key,
)
from .mocks import (
    FunctionBackend,
    MockEnvelopeError,
    NoisyRetrieverBackend,
    RuleMockBackend,
    StaticBackend,
)
from .parse import (
    BOOL_ANSWER,
    BOOL_TWO_WEEKS,
    LIST_RELEVANT,
    TWO_FIELD,
    BoolAnswer,
    CoercionError,
    MissingKeyError,
    ParsedPayload,
    PayloadError,
    PayloadParseError,
    PayloadSpec,
    SentenceList,
    TwoField,
    first_json_object,
    parse_payload,
)
from .remote import RemoteBackend
from .replay import ReplayBackend, ReplayCacheError

__all__ = [
    "Backend",
    "BackendError",
    "DecodeParams",
    "ModelResponse",
    "PromptRequest",
    "RateLimiter",
    "RequestError",
    "TokenUsage",
    "TransportError",
    "request_cache_key",
    "FunctionBackend",
    "MockEnvelopeError",
    "NoisyRetrieverBackend",
    "RuleMockBackend",
    "StaticBackend",
    "BOOL_ANSWER",
    "BOOL_TWO_WEEKS",
    "LIST_RELEVANT",
    "TWO_FIELD",
    "BoolAnswer",
    "CoercionError",
    "MissingKeyError",
    "ParsedPayload",
    "PayloadError",
    "PayloadParseError",
    "PayloadSpec",
    "SentenceList",
    "TwoField",
    "first_json_object",
    "parse_payload",
    "RemoteBackend",
    "ReplayBackend",
    "ReplayCacheError",
]
