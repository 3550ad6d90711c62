"""File formats: PLY, images, poses, cameras, checkpoints, metrics, datasets"""
