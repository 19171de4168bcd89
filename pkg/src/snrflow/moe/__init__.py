"""Log-SNR expert routing"""
