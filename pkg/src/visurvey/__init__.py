"""Visual self-report survey engine.

Parses declarative study documents, compiles them into interactive task
plans (the two-phase full/spot protocol plus single-select mood grids),
runs resumable survey sessions, schedules recurring occurrences with
snoozable reminders, and persists results through pluggable sinks. Exposed
as a library, a CLI (``visurvey``), and an HTTP service.
"""

from .clock import Clock, ManualClock, SystemClock
from .compiler import (
    ActiveItemSet,
    MultiSelectGridStep,
    SingleChoiceImageStep,
    Step,
    SummaryStep,
    TaskPlan,
    compile_full_task,
    compile_pam_task,
    compile_spot_task,
    derive_active_items,
)
from .definition import (
    ActivationRule,
    AssessmentPair,
    ChoiceDef,
    Diagnostic,
    FullAssessmentDef,
    ItemDef,
    SpotAssessmentDef,
    SpotOptionsDef,
    StudyDefinition,
    StudyParseError,
    SummaryDef,
    ValidationReport,
    canonical_serialize,
    parse_study_definition,
    validate_study,
)
from .scheduling import (
    Daily,
    Every,
    Monthly,
    Occurrence,
    ParticipantState,
    ReminderPolicy,
    ScheduleSpec,
    TaskRef,
    Weekly,
    apply_snooze,
    due_occurrences,
    next_occurrence,
    parse_deployment,
)
from .sessions import (
    AnswerMismatch,
    ResultEnvelope,
    SessionStateError,
    StepResult,
    SurveySession,
    finalize_session,
    start_session,
)
from .sinks import (
    ExportFilter,
    FileSink,
    HttpSink,
    MemorySink,
    ResultSink,
    SinkAck,
    decode_record,
    encode_record,
    export_results,
    sink_from_config,
)

__version__ = "0.1.0"
