// Read-only observer: joins the session named in ?session= and shows the replicated state.
const params = new URLSearchParams(location.search);
const session = params.get("session");
document.getElementById("session").textContent = session || "(add ?session=<id>)";

let state = null;
let seq = 0;

function show() {
  document.getElementById("state").textContent = JSON.stringify(state, null, 2);
  document.getElementById("revision").textContent = state ? state.revision : 0;
}

function apply(change) {
  const key = (c) => c[0] + "," + c[1];
  switch (change.op) {
    case "select":
      state.selection = state.selection.concat(change.cells);
      break;
    case "deselect": {
      const gone = new Set(change.cells.map(key));
      state.selection = state.selection.filter((c) => !gone.has(key(c)));
      break;
    }
    case "pose":
      state.pose = change.pose;
      state.pose_writer = change.writer;
      break;
    case "projection":
      state.projection = change.projection;
      break;
    case "clear_projection":
      state.projection = null;
      break;
    case "summary":
      state.summary = change.summary;
      break;
    case "watermark":
      state.watermarks = state.watermarks.filter((w) => w[0] !== change.client).concat([[change.client, change.seq]]);
      break;
  }
}

if (session) {
  const ws = new WebSocket((location.protocol === "https:" ? "wss://" : "ws://") + location.host + "/ws");
  const id = "web-" + Math.random().toString(36).slice(2, 8);
  ws.onopen = () => {
    ws.send(JSON.stringify({v: 1, session, client: id, seq: ++seq, type: "hello",
                            body: {role: "observer", capabilities: []}}));
  };
  ws.onmessage = (ev) => {
    const env = JSON.parse(ev.data);
    if (env.type === "full_snapshot") state = env.body.state;
    if (env.type === "state_delta" && state && env.body.revision > state.revision) {
      env.body.changes.forEach(apply);
      state.revision = env.body.revision;
    }
    if (env.type === "heartbeat") ws.send(JSON.stringify({v: 1, session, client: id, seq: ++seq, type: "heartbeat", body: {}}));
    show();
  };
}
