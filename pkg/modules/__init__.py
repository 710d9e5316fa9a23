"""
Módulos funcionales de FastTab

numerics, encoder, trm, axial_lines, grid_span, structure, curved, training,
metrics, data, pipeline, weights y job_manager; se importan por submódulo.
"""
