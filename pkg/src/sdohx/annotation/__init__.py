from .service import AnnotationService, ApiError, create_app
from .store import StudyStore
from .study import (
    ARMS,
    StudyConfig,
    StudyError,
    compute_study_report,
    load_questionnaire,
    validate_answers,
    validate_study,
)

__all__ = [
    "AnnotationService",
    "ApiError",
    "create_app",
    "StudyStore",
    "ARMS",
    "StudyConfig",
    "StudyError",
    "compute_study_report",
    "load_questionnaire",
    "validate_answers",
    "validate_study",
]
