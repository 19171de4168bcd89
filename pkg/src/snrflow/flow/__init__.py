"""Flow matching: fields, losses, sampling and training"""
