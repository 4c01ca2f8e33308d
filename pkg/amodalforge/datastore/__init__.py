from amodalforge.datastore.rle import RleMask, rle_encode, rle_decode
from amodalforge.datastore.datastore import DatasetRecord, write_dataset, read_dataset, read_annotations, validate_record, verify_manifest, dataset_splits, check_disjoint_sprites, scene_entries, layer_class_id, annotations_file, golden_path, MANIFEST_FILE
