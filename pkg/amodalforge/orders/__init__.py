from amodalforge.orders.orders import OcclusionGraph, LayerAssignment, build_occlusion_graph, assign_layers, scene_orders, layer_histogram, DIRECT, INDIRECT, KINDS
