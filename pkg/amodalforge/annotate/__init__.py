from amodalforge.annotate.annotate import PointAnnotation, SceneAnnotation, DatasetStats, StatsAccumulator, sample_points, subsample_points, label_points, annotate_scene, compute_stats, compute_stats_from_scenes, category_table, OBJECT, BACKGROUND, POINT_DECIMALS
