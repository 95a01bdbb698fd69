import { mountPlayground } from "./ui.js";

const SERVICE_URL =
  new URLSearchParams(window.location.search).get("service") ?? "http://127.0.0.1:8321";

mountPlayground(document.getElementById("app")!, SERVICE_URL);
