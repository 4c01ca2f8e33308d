from amodalforge.tracker.tracker import GenerationTracker
