"""Serve a policy over TCP and query it with the bundled client."""
# %%
import numpy as np

from multinav.config import desk_config
from multinav.server import Client, FrozenPolicy, infer, start_server
from multinav.train import init_train_state

model = FrozenPolicy.from_checkpoint(init_train_state(desk_config()))
server = start_server(model, port=0)
print("listening on port", server.port)

rng = np.random.default_rng(0)
scan = rng.uniform(0.5, 4.0, (3, model.n_beams))
with Client("127.0.0.1", server.port) as client:
    reply = client.request(scan, goal=[3.0, 0.4], vel=[0.2, 0.0])
    print("server:", reply, " in-process:", infer(model, scan, [3.0, 0.4], [0.2, 0.0]))

    # Sampled commands become reproducible after a seed handshake.
    print(client.send_raw(b'{"seed": 42}'))
    print(client.request(scan, [3.0, 0.4], [0.2, 0.0], deterministic=False))

    # Malformed input yields an error object, never a dropped connection.
    print(client.send_raw(b'{"scan": [[1, 2]]}'))
    print(client.send_raw(b"garbage"))

server.shutdown()
server.server_close()
