"""
Exceptions raised by amodalforge. Each one also derives from the closest builtin, so callers can catch either AmodalForgeError or, for example, ValueError.
"""


class AmodalForgeError(Exception):
    """
    Base class for all amodalforge errors.
    """


class IngestError(AmodalForgeError, ValueError):
    """
    Sprites or backgrounds could not be ingested (no categories, an empty category, no readable backgrounds).
    """


class EmptyMaskError(IngestError):
    """
    A sprite whose alpha never reaches the mask threshold.
    """


class DegenerateShapeError(AmodalForgeError, ValueError):
    """
    Procedural shape parameters that give a zero-area or undersized sprite.
    """


class DegeneratePlacementError(AmodalForgeError, ValueError):
    """
    A placement whose rendered mask has no pixels on the canvas.
    """


class SceneError(AmodalForgeError, KeyError):
    """
    A scene refers to a sprite or background that does not exist.
    """

    def __str__(self):
        # KeyError quotes its argument, keep the plain message instead
        return str(self.args[0]) if self.args else ''


class RetryExhaustedError(AmodalForgeError, RuntimeError):
    """
    Too many scenes in a batch could not be generated within the retry budget.
    """


class OcclusionCycleError(AmodalForgeError, ValueError):
    """
    An occlusion graph with a cycle in its direct edges.
    """


class CorruptRLEError(AmodalForgeError, ValueError):
    """
    Run-length encoded mask whose counts do not cover its size.
    """


class DatasetValidationError(AmodalForgeError, ValueError):
    """
    A dataset failed validation. The offending annotation ids and a description of each problem are stored in .problems as (annotationId, message) tuples.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        ids = sorted({str(p[0]) for p in self.problems})
        super().__init__(f'{len(self.problems)} validation problem(s) in annotation(s) {", ".join(ids)}: ' + '; '.join(f'{a}: {m}' for a, m in self.problems[:10]))


class SchemaVersionError(AmodalForgeError, ValueError):
    """
    Dataset written with a different schema version.
    """

    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(f"Dataset schema version '{found}' does not match supported version '{expected}'")


class DatastoreError(AmodalForgeError, OSError):
    """
    Failure while writing a dataset to disk.
    """


class EvaluationError(AmodalForgeError, ValueError):
    """
    Inputs that cannot be evaluated.
    """


class AnnotationError(AmodalForgeError, ValueError):
    """
    Point annotation request that cannot be satisfied, for example sub-sampling more points than exist.
    """
