TEST_MODEL_CONFIG = {
    'layers': 2,
    'rel_dim': 8,
    'heads': 2,
    'seed': 3,
    'node_dim': 1,
}

TEST_TRAIN_CONFIG = {
    'task': 'shortest_path',
    'epochs': 2,
    'steps_per_epoch': 3,
    'accumulation': 2,
    'min_nodes': 4,
    'max_nodes': 6,
    'eval_nodes': (6,),
    'eval_graphs': 2,
    'warmup_steps': 2,
    'seed': 5,
}
